pub mod balance;
pub mod bench;
pub mod equiv;
pub mod gen_data;
pub mod imbalance;
pub mod model;
pub mod simulate;
