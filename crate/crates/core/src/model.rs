//! Binary pairwise energy models and the Hamming-constrained state space.
//!
//! Energies follow `E(x) = -sum_{edges {i,j}} J_ij x_i x_j - sum_i b_i x_i`
//! with every unordered edge counted once. The target distribution is
//! `pi(x) ∝ exp(-beta E(x))` restricted to states at an exact Hamming
//! distance from a reference state.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{rng_from_seed, ChainRng};

/// Number of flips after which a [`BitState`] recomputes its cached energy
/// and local fields from scratch.
pub const REANCHOR_INTERVAL: u32 = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Topology {
    Grid2D,
    Cube3D,
    Rbm,
    Custom,
}

impl Topology {
    pub fn as_str(self) -> &'static str {
        match self {
            Topology::Grid2D => "grid2d",
            Topology::Cube3D => "cube3d",
            Topology::Rbm => "rbm",
            Topology::Custom => "custom",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub weight: f64,
}

/// Immutable energy model. Couplings are stored both as an edge list (for
/// serialization and from-scratch energies) and as a CSR adjacency (for
/// O(degree) local-field updates).
#[derive(Debug, Clone)]
pub struct BoltzmannModel {
    num_sites: usize,
    edges: Vec<Edge>,
    offsets: Vec<usize>,
    adjacency: Vec<(usize, f64)>,
    biases: Vec<f64>,
    beta: f64,
    topology: Topology,
    seed: Option<u64>,
}

impl BoltzmannModel {
    pub fn new(
        num_sites: usize,
        edges: Vec<(usize, usize, f64)>,
        biases: Vec<f64>,
        beta: f64,
        topology: Topology,
        seed: Option<u64>,
    ) -> Result<Self> {
        if num_sites == 0 {
            return Err(Error::InvalidArgument("model needs at least one site".into()));
        }
        if biases.len() != num_sites {
            return Err(Error::Dimension { expected: num_sites, got: biases.len() });
        }
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::InvalidArgument(format!("inverse temperature must be positive and finite, got {beta}")));
        }
        let mut seen = std::collections::HashSet::with_capacity(edges.len());
        let mut degree = vec![0usize; num_sites];
        let mut out = Vec::with_capacity(edges.len());
        for (a, b, w) in edges {
            for s in [a, b] {
                if s >= num_sites {
                    return Err(Error::SiteOutOfRange { site: s, num_sites });
                }
            }
            if a == b {
                return Err(Error::InvalidArgument(format!("self-coupling on site {a}")));
            }
            if !w.is_finite() {
                return Err(Error::InvalidArgument(format!("non-finite coupling on edge ({a}, {b})")));
            }
            let (i, j) = if a < b { (a, b) } else { (b, a) };
            if !seen.insert((i, j)) {
                return Err(Error::InvalidArgument(format!("duplicate edge ({i}, {j})")));
            }
            degree[i] += 1;
            degree[j] += 1;
            out.push(Edge { i, j, weight: w });
        }
        let mut offsets = Vec::with_capacity(num_sites + 1);
        offsets.push(0);
        for d in &degree {
            offsets.push(offsets.last().unwrap() + d);
        }
        let mut fill = offsets[..num_sites].to_vec();
        let mut adjacency = vec![(0usize, 0.0f64); offsets[num_sites]];
        for e in &out {
            adjacency[fill[e.i]] = (e.j, e.weight);
            fill[e.i] += 1;
            adjacency[fill[e.j]] = (e.i, e.weight);
            fill[e.j] += 1;
        }
        Ok(Self { num_sites, edges: out, offsets, adjacency, biases, beta, topology, seed })
    }

    /// Periodic `width x height` lattice with uniform coupling and bias.
    pub fn grid2d(width: usize, height: usize, coupling: f64, bias: f64, beta: f64) -> Result<Self> {
        if width < 3 || height < 3 {
            return Err(Error::UnsupportedTopology(format!(
                "periodic grid needs sides >= 3, got {width}x{height}"
            )));
        }
        let n = width * height;
        let mut edges = Vec::with_capacity(2 * n);
        for y in 0..height {
            for x in 0..width {
                let s = y * width + x;
                edges.push((s, y * width + (x + 1) % width, coupling));
                edges.push((s, ((y + 1) % height) * width + x, coupling));
            }
        }
        Self::new(n, edges, vec![bias; n], beta, Topology::Grid2D, None)
    }

    /// Periodic `side^3` lattice with couplings drawn uniformly from {-1, +1}.
    pub fn cube3d(side: usize, beta: f64, seed: u64) -> Result<Self> {
        if side < 3 {
            return Err(Error::UnsupportedTopology(format!("periodic cube needs side >= 3, got {side}")));
        }
        let mut rng = rng_from_seed(seed);
        let n = side * side * side;
        let idx = |x: usize, y: usize, z: usize| x + side * (y + side * z);
        let mut edges = Vec::with_capacity(3 * n);
        for z in 0..side {
            for y in 0..side {
                for x in 0..side {
                    let s = idx(x, y, z);
                    for t in [idx((x + 1) % side, y, z), idx(x, (y + 1) % side, z), idx(x, y, (z + 1) % side)] {
                        let w = if rng.random::<bool>() { 1.0 } else { -1.0 };
                        edges.push((s, t, w));
                    }
                }
            }
        }
        Self::new(n, edges, vec![0.0; n], beta, Topology::Cube3D, Some(seed))
    }

    /// Complete bipartite RBM whose couplings are synthetic Gabor filters.
    ///
    /// Visible sites `0..num_visible` are laid out row-major on a square image
    /// of side `ceil(sqrt(num_visible))`; hidden sites follow. Each hidden unit
    /// carries one Gabor kernel with random centre, orientation, phase and
    /// scale. All couplings are rescaled to unit standard deviation.
    pub fn rbm(num_visible: usize, num_hidden: usize, beta: f64, seed: u64) -> Result<Self> {
        if num_visible == 0 || num_hidden == 0 {
            return Err(Error::InvalidArgument("rbm needs at least one visible and one hidden unit".into()));
        }
        let mut rng = rng_from_seed(seed);
        let side = (num_visible as f64).sqrt().ceil() as usize;
        let scale = side as f64 / 28.0;
        let mut weights = Vec::with_capacity(num_visible * num_hidden);
        for _ in 0..num_hidden {
            let cx = rng.random_range(0..side) as f64;
            let cy = rng.random_range(0..side) as f64;
            let theta = rng.random_range(0.0..PI);
            let phase = rng.random_range(0.0..2.0 * PI);
            let sigma = scale * rng.random_range(1.0..4.0);
            let wavelength = sigma * rng.random_range(1.5..3.0);
            let aspect = rng.random_range(0.5..1.0);
            let (sin_t, cos_t) = theta.sin_cos();
            for v in 0..num_visible {
                let dx = (v % side) as f64 - cx;
                let dy = (v / side) as f64 - cy;
                let xr = dx * cos_t + dy * sin_t;
                let yr = -dx * sin_t + dy * cos_t;
                let envelope = (-(xr * xr + aspect * aspect * yr * yr) / (2.0 * sigma * sigma)).exp();
                weights.push(envelope * (2.0 * PI * xr / wavelength + phase).cos());
            }
        }
        let m = weights.len() as f64;
        let mean = weights.iter().sum::<f64>() / m;
        let sd = (weights.iter().map(|w| (w - mean).powi(2)).sum::<f64>() / m).sqrt();
        let norm = if sd > 0.0 { sd } else { 1.0 };
        let mut edges = Vec::with_capacity(weights.len());
        for h in 0..num_hidden {
            for v in 0..num_visible {
                edges.push((v, num_visible + h, weights[h * num_visible + v] / norm));
            }
        }
        let n = num_visible + num_hidden;
        Self::new(n, edges, vec![0.0; n], beta, Topology::Rbm, Some(seed))
    }

    pub fn num_sites(&self) -> usize {
        self.num_sites
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn topology(&self) -> Topology {
        self.topology
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn biases(&self) -> &[f64] {
        &self.biases
    }

    /// Neighbours of `site` with their couplings.
    pub fn neighbors(&self, site: usize) -> &[(usize, f64)] {
        &self.adjacency[self.offsets[site]..self.offsets[site + 1]]
    }

    /// Coupling between two sites, 0 when they are not connected.
    pub fn coupling(&self, i: usize, j: usize) -> f64 {
        if i >= self.num_sites || j >= self.num_sites {
            return 0.0;
        }
        self.neighbors(i).iter().find(|(t, _)| *t == j).map_or(0.0, |&(_, w)| w)
    }

    /// Same model at a different inverse temperature.
    pub fn with_beta(&self, beta: f64) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::InvalidArgument(format!("inverse temperature must be positive and finite, got {beta}")));
        }
        Ok(Self { beta, ..self.clone() })
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.num_sites {
            return Err(Error::Dimension { expected: self.num_sites, got: len });
        }
        Ok(())
    }

    /// From-scratch energy of a configuration.
    pub fn energy(&self, bits: &[bool]) -> Result<f64> {
        self.check_len(bits.len())?;
        Ok(self.energy_with(|i| bits[i]))
    }

    fn energy_with(&self, bit: impl Fn(usize) -> bool) -> f64 {
        let pair: f64 = self.edges.iter().filter(|e| bit(e.i) && bit(e.j)).map(|e| e.weight).sum();
        let field: f64 = (0..self.num_sites).filter(|&i| bit(i)).map(|i| self.biases[i]).sum();
        -pair - field
    }

    fn local_fields_with(&self, bit: impl Fn(usize) -> bool) -> Vec<f64> {
        (0..self.num_sites)
            .map(|i| {
                self.biases[i] + self.neighbors(i).iter().filter(|(j, _)| bit(*j)).map(|(_, w)| w).sum::<f64>()
            })
            .collect()
    }

    /// `E(x with site flipped) - E(x)` from the cached local field.
    pub fn delta_energy(&self, state: &BitState, site: usize) -> Result<f64> {
        if site >= self.num_sites {
            return Err(Error::SiteOutOfRange { site, num_sites: self.num_sites });
        }
        Ok(state.delta_energy(site))
    }

    /// Toggles one bit, updating the cached energy and neighbour fields.
    pub fn apply_flip(&self, state: &mut BitState, site: usize) -> Result<()> {
        if site >= self.num_sites {
            return Err(Error::SiteOutOfRange { site, num_sites: self.num_sites });
        }
        state.flip(self, site);
        Ok(())
    }

    /// Serializes in the model-file JSON format. Floats are written with 17
    /// significant digits so the file reloads bit-exactly.
    pub fn to_json(&self) -> String {
        let f = |x: f64| format!("{x:.16e}");
        let mut s = String::with_capacity(32 * self.edges.len() + 128);
        s.push_str("{\n");
        let _ = writeln!(s, "  \"topology\": \"{}\",", self.topology.as_str());
        let _ = writeln!(s, "  \"n_sites\": {},", self.num_sites);
        let _ = writeln!(s, "  \"beta\": {},", f(self.beta));
        s.push_str("  \"edges\": [");
        for (n, e) in self.edges.iter().enumerate() {
            if n > 0 {
                s.push(',');
            }
            let _ = write!(s, "\n    [{}, {}, {}]", e.i, e.j, f(e.weight));
        }
        s.push_str("\n  ],\n  \"biases\": [");
        let biases: Vec<String> = self.biases.iter().map(|&b| f(b)).collect();
        s.push_str(&biases.join(", "));
        s.push_str("],\n");
        match self.seed {
            Some(seed) => {
                let _ = writeln!(s, "  \"seed\": {seed}");
            }
            None => s.push_str("  \"seed\": null\n"),
        }
        s.push_str("}\n");
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text)?;
        Self::new(file.n_sites, file.edges, file.biases, file.beta, file.topology, file.seed)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[derive(Deserialize)]
struct ModelFile {
    topology: Topology,
    n_sites: usize,
    beta: f64,
    edges: Vec<(usize, usize, f64)>,
    biases: Vec<f64>,
    seed: Option<u64>,
}

/// Target set: states at exact Hamming distance `distance` from `reference`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConstraintSpec {
    reference: Vec<bool>,
    distance: usize,
}

impl ConstraintSpec {
    pub fn new(reference: Vec<bool>, distance: usize) -> Result<Self> {
        if distance > reference.len() {
            return Err(Error::InvalidArgument(format!(
                "hamming distance {distance} exceeds {} sites",
                reference.len()
            )));
        }
        Ok(Self { reference, distance })
    }

    /// Reference state with every bit cleared.
    pub fn from_ground(num_sites: usize, distance: usize) -> Result<Self> {
        Self::new(vec![false; num_sites], distance)
    }

    pub fn reference(&self) -> &[bool] {
        &self.reference
    }

    pub fn distance(&self) -> usize {
        self.distance
    }

    pub fn num_sites(&self) -> usize {
        self.reference.len()
    }

    /// Whether `site` of `state` differs from the reference.
    #[inline]
    pub fn is_displaced(&self, state: &BitState, site: usize) -> bool {
        state.get(site) != self.reference[site]
    }

    pub fn hamming(&self, bits: &[bool]) -> Result<usize> {
        if bits.len() != self.reference.len() {
            return Err(Error::Dimension { expected: self.reference.len(), got: bits.len() });
        }
        Ok(bits.iter().zip(&self.reference).filter(|(a, b)| a != b).count())
    }

    pub fn satisfies(&self, bits: &[bool]) -> Result<bool> {
        Ok(self.hamming(bits)? == self.distance)
    }

    pub fn state_satisfies(&self, state: &BitState) -> bool {
        state.len() == self.reference.len()
            && (0..state.len()).filter(|&i| self.is_displaced(state, i)).count() == self.distance
    }

    /// Largest walk length that fits inside the constrained space.
    pub fn max_walk_length(&self) -> usize {
        self.distance.min(self.reference.len() - self.distance)
    }

    /// Uniform draw from the constrained state space.
    pub fn random_state(&self, model: &BoltzmannModel, rng: &mut ChainRng) -> Result<BitState> {
        let mut bits = self.reference.clone();
        for site in index::sample(rng, bits.len(), self.distance) {
            bits[site] = !bits[site];
        }
        BitState::new(model, &bits)
    }
}

/// A configuration with cached energy and local fields
/// `h_i = sum_j J_ij x_j + b_i`.
#[derive(Debug, Clone)]
pub struct BitState {
    words: Vec<u64>,
    len: usize,
    energy: f64,
    local_fields: Vec<f64>,
    flips_since_anchor: u32,
}

impl BitState {
    pub fn new(model: &BoltzmannModel, bits: &[bool]) -> Result<Self> {
        model.check_len(bits.len())?;
        let mut words = vec![0u64; bits.len().div_ceil(64)];
        for (i, &b) in bits.iter().enumerate() {
            if b {
                words[i / 64] |= 1 << (i % 64);
            }
        }
        let mut state = Self { words, len: bits.len(), energy: 0.0, local_fields: Vec::new(), flips_since_anchor: 0 };
        state.reanchor(model);
        Ok(state)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn get(&self, site: usize) -> bool {
        self.words[site / 64] >> (site % 64) & 1 == 1
    }

    pub fn bits(&self) -> Vec<bool> {
        (0..self.len).map(|i| self.get(i)).collect()
    }

    /// Packed words; a compact hash key for the configuration.
    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn energy(&self) -> f64 {
        self.energy
    }

    pub fn local_fields(&self) -> &[f64] {
        &self.local_fields
    }

    pub fn same_bits(&self, other: &BitState) -> bool {
        self.len == other.len && self.words == other.words
    }

    #[inline]
    pub(crate) fn delta_energy(&self, site: usize) -> f64 {
        if self.get(site) {
            self.local_fields[site]
        } else {
            -self.local_fields[site]
        }
    }

    pub(crate) fn flip(&mut self, model: &BoltzmannModel, site: usize) {
        let was_set = self.get(site);
        self.energy += self.delta_energy(site);
        self.words[site / 64] ^= 1 << (site % 64);
        let sign = if was_set { -1.0 } else { 1.0 };
        for &(j, w) in model.neighbors(site) {
            self.local_fields[j] += sign * w;
        }
        self.flips_since_anchor += 1;
        if self.flips_since_anchor >= REANCHOR_INTERVAL {
            self.reanchor(model);
        }
    }

    /// Recomputes energy and local fields from scratch.
    pub fn reanchor(&mut self, model: &BoltzmannModel) {
        let words = &self.words;
        let bit = |i: usize| words[i / 64] >> (i % 64) & 1 == 1;
        self.energy = model.energy_with(bit);
        self.local_fields = model.local_fields_with(bit);
        self.flips_since_anchor = 0;
    }
}
