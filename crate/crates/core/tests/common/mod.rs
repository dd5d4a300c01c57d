pub mod level_set;
