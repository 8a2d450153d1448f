//! Window functions, short-time Fourier transforms and the padded
//! multi-channel spectrogram that feeds the CNN.

mod analysis;
mod assemble;
mod stft;
mod window;

pub use analysis::{leakage_fraction, main_lobe_half_width, max_sidelobe_db, tone, window_response_db};
pub use assemble::{
    assemble_components, assemble_input, read_spectrogram_dump, write_spectrogram_dump,
    MultiChannelSpectrogram, COMPONENT_ORDER,
};
pub use stft::{frame_geometry, spectrogram, stft, FrameGeometry, Spectrogram, StftConfig};
pub use window::{window_coefficients, WindowKind, WindowSpec, HAMMING_A0};

pub use rustfft::num_complex::Complex64;
