use num_complex::Complex64;

use crate::lattice::{BoxSpec, Site};

/// Complex amplitudes `q_j`, one per site of a box, stored in canonical site order.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    bx: BoxSpec,
    amps: Vec<Complex64>,
}

impl StateVector {
    pub fn zeros(bx: BoxSpec) -> Self {
        StateVector {
            bx,
            amps: vec![Complex64::new(0.0, 0.0); bx.num_sites()],
        }
    }

    pub fn from_amplitudes(bx: BoxSpec, amps: Vec<Complex64>) -> Self {
        assert_eq!(amps.len(), bx.num_sites(), "amplitude count must match the box");
        StateVector { bx, amps }
    }

    pub fn box_spec(&self) -> BoxSpec {
        self.bx
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn amplitudes_mut(&mut self) -> &mut [Complex64] {
        &mut self.amps
    }

    pub fn get(&self, j: &Site) -> Complex64 {
        self.bx
            .index_of(j)
            .map(|i| self.amps[i])
            .unwrap_or_default()
    }

    pub fn set(&mut self, j: &Site, value: Complex64) {
        let i = self.bx.index_of(j).expect("site outside the box");
        self.amps[i] = value;
    }

    pub fn iter(&self) -> impl Iterator<Item = (Site, Complex64)> + '_ {
        self.amps
            .iter()
            .enumerate()
            .map(|(i, z)| (self.bx.site(i), *z))
    }

    /// Actions `I_j = |q_j|^2`.
    pub fn actions(&self) -> Vec<f64> {
        self.amps.iter().map(|z| z.norm_sqr()).collect()
    }

    pub fn total_action(&self) -> f64 {
        self.amps.iter().map(|z| z.norm_sqr()).sum()
    }

    /// `sup_j |q_j - p_j| * weight(j)`.
    pub fn weighted_distance(&self, other: &StateVector, weight: impl Fn(&Site) -> f64) -> f64 {
        assert_eq!(self.bx, other.bx);
        self.amps
            .iter()
            .zip(&other.amps)
            .enumerate()
            .map(|(i, (a, b))| (a - b).norm() * weight(&self.bx.site(i)))
            .fold(0.0, f64::max)
    }

    pub fn sup_distance(&self, other: &StateVector) -> f64 {
        self.weighted_distance(other, |_| 1.0)
    }
}
