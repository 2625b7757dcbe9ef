pub mod dynamics;
pub mod environment;
pub mod geometry;
pub mod metrics;
pub mod opponents;
pub mod perception;
pub mod race;
pub mod seed;
pub mod sensor;
pub mod sim;
pub mod spline;
pub mod track;
