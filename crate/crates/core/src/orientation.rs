//! Anatomical axis codes and signed axis permutations.
//!
//! A code letter names the patient direction toward which an array index
//! increases: `R`/`L` (patient right/left), `A`/`P` (anterior/posterior),
//! `S`/`I` (superior/inferior). World coordinates follow the RAS+ convention
//! used by NIfTI, so `R`, `A` and `S` are the positive directions.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// One signed patient direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    Right,
    Left,
    Anterior,
    Posterior,
    Superior,
    Inferior,
}

impl Direction {
    /// World axis index in RAS+ coordinates (0 = x, 1 = y, 2 = z).
    pub fn world_axis(self) -> usize {
        match self {
            Direction::Right | Direction::Left => 0,
            Direction::Anterior | Direction::Posterior => 1,
            Direction::Superior | Direction::Inferior => 2,
        }
    }

    pub fn is_positive(self) -> bool {
        matches!(
            self,
            Direction::Right | Direction::Anterior | Direction::Superior
        )
    }

    pub fn from_world(axis: usize, positive: bool) -> Direction {
        match (axis, positive) {
            (0, true) => Direction::Right,
            (0, false) => Direction::Left,
            (1, true) => Direction::Anterior,
            (1, false) => Direction::Posterior,
            (2, true) => Direction::Superior,
            (_, false) => Direction::Inferior,
            (_, true) => Direction::Superior,
        }
    }

    pub fn letter(self) -> char {
        match self {
            Direction::Right => 'R',
            Direction::Left => 'L',
            Direction::Anterior => 'A',
            Direction::Posterior => 'P',
            Direction::Superior => 'S',
            Direction::Inferior => 'I',
        }
    }

    pub fn from_letter(c: char) -> Option<Direction> {
        Some(match c.to_ascii_uppercase() {
            'R' => Direction::Right,
            'L' => Direction::Left,
            'A' => Direction::Anterior,
            'P' => Direction::Posterior,
            'S' => Direction::Superior,
            'I' => Direction::Inferior,
            _ => return None,
        })
    }
}

/// Directions of the three array axes; always a signed permutation of the
/// three world axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct AxisCodes([Direction; 3]);

impl AxisCodes {
    /// Canonical coronal layout: axis0 superior→inferior, axis1
    /// anterior→posterior, axis2 patient right→left.
    pub const CORONAL: AxisCodes = AxisCodes([
        Direction::Inferior,
        Direction::Posterior,
        Direction::Left,
    ]);

    pub const RAS: AxisCodes = AxisCodes([
        Direction::Right,
        Direction::Anterior,
        Direction::Superior,
    ]);

    pub fn new(dirs: [Direction; 3]) -> Result<Self> {
        let mut seen = [false; 3];
        for d in dirs {
            let a = d.world_axis();
            if seen[a] {
                return Err(CoreError::Orientation(format!(
                    "axis codes {}{}{} repeat a world axis",
                    dirs[0].letter(),
                    dirs[1].letter(),
                    dirs[2].letter()
                )));
            }
            seen[a] = true;
        }
        Ok(AxisCodes(dirs))
    }

    pub fn directions(&self) -> [Direction; 3] {
        self.0
    }

    /// All 48 signed axis permutations.
    pub fn all() -> Vec<AxisCodes> {
        let perms = [
            [0, 1, 2],
            [0, 2, 1],
            [1, 0, 2],
            [1, 2, 0],
            [2, 0, 1],
            [2, 1, 0],
        ];
        let mut out = Vec::with_capacity(48);
        for p in perms {
            for signs in 0..8u8 {
                let dirs = [0, 1, 2].map(|i| Direction::from_world(p[i], signs & (1 << i) != 0));
                out.push(AxisCodes(dirs));
            }
        }
        out
    }

    /// Unit direction of each array axis in RAS+ world space, as matrix
    /// columns (`m[row][col]`).
    pub fn direction_matrix(&self) -> [[f64; 3]; 3] {
        let mut m = [[0.0; 3]; 3];
        for (col, d) in self.0.iter().enumerate() {
            m[d.world_axis()][col] = if d.is_positive() { 1.0 } else { -1.0 };
        }
        m
    }

    /// Reduces a direction matrix (columns = array axes, arbitrary scale) to
    /// the nearest signed permutation by taking the strongest component of
    /// each column. The flag is set when any column has a non-negligible
    /// off-axis component.
    pub fn from_direction_matrix(m: &[[f64; 3]; 3]) -> Result<(AxisCodes, bool)> {
        let mut dirs = [Direction::Right; 3];
        let mut oblique = false;
        for (col, dir) in dirs.iter_mut().enumerate() {
            let column = [m[0][col], m[1][col], m[2][col]];
            let norm = column.iter().map(|v| v * v).sum::<f64>().sqrt();
            if !norm.is_finite() || norm == 0.0 {
                return Err(CoreError::Orientation(format!(
                    "degenerate affine column {col}"
                )));
            }
            let (axis, value) = column
                .iter()
                .copied()
                .enumerate()
                .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
                .expect("three components");
            if column
                .iter()
                .enumerate()
                .any(|(i, v)| i != axis && v.abs() > 1e-4 * norm)
            {
                oblique = true;
            }
            *dir = Direction::from_world(axis, value > 0.0);
        }
        Ok((AxisCodes::new(dirs)?, oblique))
    }

    /// The axis transform that maps a volume stored with `self` onto `target`.
    pub fn transform_to(&self, target: &AxisCodes) -> AxisTransform {
        let mut source_axis = [0usize; 3];
        let mut flip = [false; 3];
        for (t, td) in target.0.iter().enumerate() {
            let s = self
                .0
                .iter()
                .position(|sd| sd.world_axis() == td.world_axis())
                .expect("valid codes cover every world axis");
            source_axis[t] = s;
            flip[t] = self.0[s] != *td;
        }
        AxisTransform { source_axis, flip }
    }
}

impl fmt::Display for AxisCodes {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for d in self.0 {
            write!(f, "{}", d.letter())?;
        }
        Ok(())
    }
}

impl FromStr for AxisCodes {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        let chars: Vec<char> = s.trim().chars().collect();
        if chars.len() != 3 {
            return Err(CoreError::Orientation(format!(
                "axis code {s:?} must have three letters"
            )));
        }
        let mut dirs = [Direction::Right; 3];
        for (d, c) in dirs.iter_mut().zip(chars) {
            *d = Direction::from_letter(c)
                .ok_or_else(|| CoreError::Orientation(format!("unknown axis letter {c:?}")))?;
        }
        AxisCodes::new(dirs)
    }
}

impl Serialize for AxisCodes {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for AxisCodes {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A signed axis permutation: output axis `t` reads source axis
/// `source_axis[t]`, reversed when `flip[t]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AxisTransform {
    pub source_axis: [usize; 3],
    pub flip: [bool; 3],
}

impl AxisTransform {
    pub fn identity() -> Self {
        AxisTransform {
            source_axis: [0, 1, 2],
            flip: [false; 3],
        }
    }

    pub fn is_identity(&self) -> bool {
        *self == Self::identity()
    }

    pub fn inverse(&self) -> AxisTransform {
        let mut source_axis = [0; 3];
        let mut flip = [false; 3];
        for t in 0..3 {
            let s = self.source_axis[t];
            source_axis[s] = t;
            flip[s] = self.flip[t];
        }
        AxisTransform { source_axis, flip }
    }

    pub fn output_dims(&self, dims: [usize; 3]) -> [usize; 3] {
        self.source_axis.map(|s| dims[s])
    }

    /// Source index for an output index.
    #[inline]
    pub fn source_index(&self, dims: [usize; 3], out: [usize; 3]) -> [usize; 3] {
        let mut src = [0; 3];
        for t in 0..3 {
            let s = self.source_axis[t];
            src[s] = if self.flip[t] { dims[s] - 1 - out[t] } else { out[t] };
        }
        src
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_prints_codes() {
        let c: AxisCodes = "ras".parse().unwrap();
        assert_eq!(c, AxisCodes::RAS);
        assert_eq!(AxisCodes::CORONAL.to_string(), "IPL");
        assert!("RLS".parse::<AxisCodes>().is_err());
        assert!("RAX".parse::<AxisCodes>().is_err());
        assert!("RA".parse::<AxisCodes>().is_err());
    }

    #[test]
    fn there_are_48_distinct_codes() {
        let all = AxisCodes::all();
        assert_eq!(all.len(), 48);
        let set: std::collections::HashSet<_> = all.iter().collect();
        assert_eq!(set.len(), 48);
    }

    #[test]
    fn direction_matrix_round_trips_for_every_code() {
        for c in AxisCodes::all() {
            let (back, oblique) = AxisCodes::from_direction_matrix(&c.direction_matrix()).unwrap();
            assert_eq!(back, c);
            assert!(!oblique);
        }
    }

    #[test]
    fn slightly_rotated_matrix_is_flagged_oblique() {
        let a: f64 = 0.1;
        let m = [[a.cos(), -a.sin(), 0.0], [a.sin(), a.cos(), 0.0], [0.0, 0.0, 1.0]];
        let (c, oblique) = AxisCodes::from_direction_matrix(&m).unwrap();
        assert_eq!(c, AxisCodes::RAS);
        assert!(oblique);
    }

    #[test]
    fn transform_inverse_composes_to_identity() {
        for a in AxisCodes::all() {
            for b in [AxisCodes::CORONAL, AxisCodes::RAS] {
                let t = a.transform_to(&b);
                let back = b.transform_to(&a);
                assert_eq!(t.inverse(), back);
            }
        }
    }
}
