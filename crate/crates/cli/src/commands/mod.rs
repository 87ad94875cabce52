pub mod compare;
pub mod control;
pub mod reduce;
pub mod simulate;
