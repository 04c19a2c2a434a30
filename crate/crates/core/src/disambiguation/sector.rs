//! Octant ("sector") inference from the polarity of the beacon tones.
//!
//! Off-axis dipole components carry the sign of a product of two coordinates
//! (`B1y ~ xy`, `B1z ~ xz`, ...). Six of them form a phase combination that
//! identifies the octant up to inversion through the origin, so each
//! combination names a pair of antipodal sectors. The previous sector picks
//! the member that is reachable without passing through the beacon.

use std::fmt;

use crate::dsp::{wrap_angle, LiaOutput};
use crate::error::{Error, Result};
use crate::field::Vec3;

/// Coordinates closer than this to a coil plane have no defined sector.
pub const PLANE_TOLERANCE_M: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Sector(u8);

/// Octant signs `(sx, sy, sz)` of sectors 1..=8.
const OCTANTS: [(i8, i8, i8); 8] = [
    (1, 1, 1),
    (1, -1, 1),
    (-1, -1, 1),
    (-1, 1, 1),
    (1, 1, -1),
    (1, -1, -1),
    (-1, -1, -1),
    (-1, 1, -1),
];

impl Sector {
    pub fn new(id: u8) -> Result<Self> {
        if (1..=8).contains(&id) {
            Ok(Self(id))
        } else {
            Err(Error::Config(format!("sector id must be in 1..=8, got {id}")))
        }
    }

    pub fn all() -> [Sector; 8] {
        [1, 2, 3, 4, 5, 6, 7, 8].map(Sector)
    }

    pub fn id(self) -> u8 {
        self.0
    }

    pub fn octant(self) -> (i8, i8, i8) {
        OCTANTS[self.0 as usize - 1]
    }

    pub fn from_octant(sx: i8, sy: i8, sz: i8) -> Self {
        let idx = OCTANTS
            .iter()
            .position(|&o| o == (sx.signum(), sy.signum(), sz.signum()))
            .expect("every sign triple is an octant");
        Self(idx as u8 + 1)
    }

    /// The sector reflected through the beacon center.
    pub fn antipode(self) -> Self {
        let (x, y, z) = self.octant();
        Self::from_octant(-x, -y, -z)
    }

    /// Sectors sharing a face with this one.
    pub fn neighbours(self) -> [Sector; 3] {
        let (x, y, z) = self.octant();
        [
            Self::from_octant(-x, y, z),
            Self::from_octant(x, -y, z),
            Self::from_octant(x, y, -z),
        ]
    }

    /// Unit vector through the middle of the octant.
    pub fn centroid_direction(self) -> Vec3 {
        let (x, y, z) = self.octant();
        Vec3::new(x as f64, y as f64, z as f64) / 3f64.sqrt()
    }
}

impl fmt::Display for Sector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

pub fn sector_from_position(r: &Vec3) -> Result<Sector> {
    if r.iter().any(|c| !c.is_finite() || c.abs() < PLANE_TOLERANCE_M) {
        return Err(Error::Degenerate(format!(
            "position [{:.3e}, {:.3e}, {:.3e}] lies on a coil plane",
            r.x, r.y, r.z
        )));
    }
    let s = |v: f64| if v > 0.0 { 1 } else { -1 };
    Ok(Sector::from_octant(s(r.x), s(r.y), s(r.z)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Polarity {
    InPhase,
    AntiPhase,
}

impl Polarity {
    pub fn from_sign(s: i8) -> Self {
        if s >= 0 {
            Polarity::InPhase
        } else {
            Polarity::AntiPhase
        }
    }

    /// `+` iff the wrapped phase is within a quarter turn of zero.
    pub fn from_phase(phase_rad: f64) -> Self {
        if wrap_angle(phase_rad).abs() < std::f64::consts::FRAC_PI_2 {
            Polarity::InPhase
        } else {
            Polarity::AntiPhase
        }
    }

    fn symbol(self) -> char {
        match self {
            Polarity::InPhase => '+',
            Polarity::AntiPhase => '-',
        }
    }
}

/// Six polarities, two per coil, in the column order of the sector table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PhaseCombo(pub [[Polarity; 2]; 3]);

impl PhaseCombo {
    fn parse(s: &str) -> Self {
        let p: Vec<Polarity> = s
            .chars()
            .filter(|c| *c == '+' || *c == '-')
            .map(|c| if c == '+' { Polarity::InPhase } else { Polarity::AntiPhase })
            .collect();
        PhaseCombo([[p[0], p[1]], [p[2], p[3]], [p[4], p[5]]])
    }
}

impl fmt::Display for PhaseCombo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [a, b, c] = self.0;
        write!(
            f,
            "({},{}) ({},{}) ({},{})",
            a[0].symbol(),
            a[1].symbol(),
            b[0].symbol(),
            b[1].symbol(),
            c[0].symbol(),
            c[1].symbol()
        )
    }
}

/// The sector table, verbatim: sector, direction, polarities.
pub const SECTOR_TABLE: [(u8, &str, &str); 8] = [
    (1, "x > 0, y > 0, z > 0", "+,+ +,+ +,+"),
    (7, "x < 0, y < 0, z < 0", "+,+ +,+ +,+"),
    (2, "x > 0, y < 0, z > 0", "+,- -,+ -,-"),
    (8, "x < 0, y > 0, z < 0", "+,- -,+ -,-"),
    (3, "x < 0, y < 0, z > 0", "-,- +,- +,-"),
    (5, "x > 0, y > 0, z < 0", "-,- +,- +,-"),
    (4, "x < 0, y > 0, z > 0", "-,+ -,- -,+"),
    (6, "x > 0, y < 0, z < 0", "-,+ -,- -,+"),
];

/// `(coil, axis)` of the field component behind each table column.
///
/// Columns are labelled `(1x, 1y) (2y, 2z) (3x, 3z)` in the table, but the
/// polarities listed there are those of `xz, yz | xy, xz | xy, yz`. Each
/// column is bound to the off-axis component carrying that product.
pub const COMBO_COMPONENTS: [[(usize, usize); 2]; 3] = [
    [(0, 2), (1, 2)],
    [(1, 0), (2, 0)],
    [(0, 1), (2, 1)],
];

/// Table polarities of a sector.
pub fn table_combo(sector: Sector) -> PhaseCombo {
    let row = SECTOR_TABLE
        .iter()
        .find(|r| r.0 == sector.id())
        .expect("all sectors tabulated");
    PhaseCombo::parse(row.2)
}

/// Read the combination off settled lock-in phases.
pub fn classify_phase_combo(lia: &LiaOutput, gate_gauss: f64) -> Result<PhaseCombo> {
    let mut flags = [[Polarity::InPhase; 2]; 3];
    for (col, pair) in COMBO_COMPONENTS.iter().enumerate() {
        for (k, &(coil, axis)) in pair.iter().enumerate() {
            let amp = lia.amp[coil][axis];
            if !(amp >= gate_gauss) {
                return Err(Error::LowConfidence(format!(
                    "coil {} axis {} amplitude {amp:.4} G below {gate_gauss} G",
                    coil + 1,
                    ["x", "y", "z"][axis]
                )));
            }
            flags[col][k] = Polarity::from_phase(lia.phase[coil][axis]);
        }
    }
    Ok(PhaseCombo(flags))
}

/// Which reduced-table row (1..=4) a combination matches, if any.
pub fn reduced_row(combo: &PhaseCombo) -> Option<u8> {
    (1..=4).find(|&id| table_combo(Sector(id)) == *combo)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SectorResolution {
    pub sector: Sector,
    /// False when the combination matched no table row and `prev` was held.
    pub confident: bool,
}

/// Choose between the two sectors sharing `combo`, given the last sector.
///
/// The candidate whose closed neighbourhood contains `prev` wins; the two
/// neighbourhoods of an antipodal pair partition all eight sectors.
pub fn resolve_sector(combo: &PhaseCombo, prev: Option<Sector>) -> Result<SectorResolution> {
    let prev = prev.ok_or(Error::NotInitialized("sector has not been seeded"))?;
    let Some(row) = reduced_row(combo) else {
        return Ok(SectorResolution {
            sector: prev,
            confident: false,
        });
    };
    let near = Sector(row);
    let reachable = prev == near || near.neighbours().contains(&prev);
    Ok(SectorResolution {
        sector: if reachable { near } else { near.antipode() },
        confident: true,
    })
}

/// Sector state seeded at the handshake and advanced on each combination.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SectorTracker {
    current: Option<Sector>,
}

impl SectorTracker {
    pub fn seed(&mut self, sector: Sector) {
        self.current = Some(sector);
    }

    pub fn current(&self) -> Option<Sector> {
        self.current
    }

    pub fn update(&mut self, combo: &PhaseCombo) -> Result<SectorResolution> {
        let res = resolve_sector(combo, self.current)?;
        self.current = Some(res.sector);
        Ok(res)
    }
}
