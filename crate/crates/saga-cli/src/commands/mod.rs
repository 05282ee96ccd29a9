pub mod bench;
pub mod check;
pub mod flops;
pub mod gradcheck;
pub mod rank;
