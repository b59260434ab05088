pub mod checks;
pub mod oracles;
