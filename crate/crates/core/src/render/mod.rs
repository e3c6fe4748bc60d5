//! Procedural staff engraver and random score generator.

mod canvas;
mod engrave;
mod generator;

pub use canvas::StaffImage;
pub use engrave::{event_center_x, image_width, render, staff_y, NoiseOptions, EVENT_WIDTH, HEIGHT, MARGIN};
pub use generator::{generate_random_score, measure_ticks_per_voice, GeneratorConfig};

use crate::notation::NotationError;

#[derive(Debug, thiserror::Error)]
pub enum RenderError {
    #[error(transparent)]
    Notation(#[from] NotationError),
    #[error("invalid generator settings: {0}")]
    InvalidKnobs(String),
    #[error("image i/o: {0}")]
    Image(#[from] image::ImageError),
    #[error("image has no pixels")]
    Empty,
}
