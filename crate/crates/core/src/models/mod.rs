//! Concrete models: Ising, image segmentation and the graph model.

pub mod cftp;
pub mod ergm;
pub mod imageseg;
pub mod ising;

pub use cftp::{cftp_draw, cftp_sample, CftpDraw};
pub use ergm::{
    change_stats, ergm_flip_sweep, ergm_stats, load_edge_list, parse_edge_list, ErgmGraph, ErgmSpace,
    StarDefinition,
};
pub use imageseg::{pixel_prob_plus, pixel_sweep, sigma2_draw, simulate_noisy_image, ImageSegState};
pub use ising::{ising_energy, ising_heatbath_sweep, ising_stat, IsingLattice, IsingSpace};
