//! Sign and sector disambiguation of the dipole field.

pub mod sector;
pub mod signs;
pub mod window;

pub use sector::{
    classify_phase_combo, reduced_row, resolve_sector, sector_from_position, table_combo, PhaseCombo,
    Polarity, Sector, SectorResolution, SectorTracker, COMBO_COMPONENTS, SECTOR_TABLE,
};
pub use signs::{
    crossing_candidate, init_signs_from_position, init_signs_rotated, CrossingThresholds, Flip,
    SignState, SignTracker,
};
pub use window::{PhaseWindow, PHASE_WINDOW_LEN};
