//! Seeded random test fields.
//!
//! Generator: SplitMix64 with state `s` advanced by `φ = 0x9e3779b97f4a7c15`
//! before each output and finalised by the standard mix
//! `z ← (z ⊕ z≫30)·0xbf58476d1ce4e5b9`, `z ← (z ⊕ z≫27)·0x94d049bb133111eb`,
//! `z ⊕ z≫31`. Field `i` of a run with seed `s` draws from a fresh SplitMix64
//! whose state is the `i`-th output of SplitMix64 started at state `s`
//! (counting from 0), so any field can be regenerated without its
//! predecessors. Uniform reals are `(u ≫ 11)·2⁻⁵³` for each 64-bit output `u`.

use std::sync::Arc;

use rand_core::{Rng, SeedableRng};
use rand_xoshiro::SplitMix64;
use serde::Serialize;

use crate::field::{BumpField, CylindricalBump, FieldError, ScalarField};
use crate::group::GroupModel;

/// Seed of field `index` in the run with seed `seed`.
pub fn child_seed(seed: u64, index: u64) -> u64 {
    let mut rng = SplitMix64::seed_from_u64(seed);
    let mut out = rng.next_u64();
    for _ in 0..index {
        out = rng.next_u64();
    }
    out
}

/// Uniform draws for one field.
#[derive(Debug, Clone)]
pub struct FieldRng(SplitMix64);

impl FieldRng {
    pub fn new(seed: u64) -> Self {
        Self(SplitMix64::seed_from_u64(seed))
    }

    /// Generator of field `index` in the run with seed `seed`.
    pub fn for_field(seed: u64, index: u64) -> Self {
        Self::new(child_seed(seed, index))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[lo, hi)`.
    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform on the unit sphere of `ℝⁿ` (rejection from the cube).
    pub fn direction(&mut self, n: usize) -> Vec<f64> {
        loop {
            let v: Vec<f64> = (0..n).map(|_| self.range(-1.0, 1.0)).collect();
            let r2: f64 = v.iter().map(|x| x * x).sum();
            if r2 > 1e-4 && r2 <= 1.0 {
                let r = r2.sqrt();
                return v.into_iter().map(|x| x / r).collect();
            }
        }
    }
}

/// Family used for random fields on a group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldFamily {
    /// Tilted box bumps with an annular cutoff; any direction dependence.
    Box,
    /// Tilted bumps in `(|x′|, higher strata)`.
    Cylindrical,
}

impl FieldFamily {
    /// Box bumps up to dimension 3, cylindrical bumps above.
    pub fn for_group(g: &GroupModel) -> Self {
        if g.dim() <= 3 {
            Self::Box
        } else {
            Self::Cylindrical
        }
    }
}

/// Where a random field came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct FieldTag {
    pub seed: u64,
    pub index: u64,
    pub family: FieldFamily,
}

/// Reproducible random admissible fields on one group.
#[derive(Debug, Clone)]
pub struct FieldSampler {
    g: GroupModel,
    family: FieldFamily,
    seed: u64,
}

impl FieldSampler {
    pub fn new(g: &GroupModel, seed: u64) -> Self {
        Self {
            g: g.clone(),
            family: FieldFamily::for_group(g),
            seed,
        }
    }

    pub fn with_family(mut self, family: FieldFamily) -> Self {
        self.family = family;
        self
    }

    pub fn family(&self) -> FieldFamily {
        self.family
    }

    pub fn tag(&self, index: u64) -> FieldTag {
        FieldTag {
            seed: self.seed,
            index,
            family: self.family,
        }
    }

    /// Field `index`; its support avoids `x′ = 0`.
    pub fn field(&self, index: u64) -> Result<Arc<dyn ScalarField>, FieldError> {
        let mut rng = FieldRng::for_field(self.seed, index);
        self.draw(&mut rng, None).map(|d| d.field)
    }

    /// Two fields whose supports overlap; pair `index` uses field seed `index`.
    pub fn pair(
        &self,
        index: u64,
    ) -> Result<(Arc<dyn ScalarField>, Arc<dyn ScalarField>), FieldError> {
        let mut rng = FieldRng::for_field(self.seed, index);
        let a = self.draw(&mut rng, None)?;
        let b = self.draw(&mut rng, Some(&a))?;
        Ok((a.field, b.field))
    }

    fn draw(&self, rng: &mut FieldRng, near: Option<&Drawn>) -> Result<Drawn, FieldError> {
        let g = &self.g;
        let n = g.dim();
        let n_h = g.horizontal_dim();
        match self.family {
            FieldFamily::Box => {
                let center: Vec<f64> = match near {
                    None => {
                        let dir = rng.direction(n_h);
                        let r = rng.range(0.8, 1.5);
                        let mut c: Vec<f64> = dir.into_iter().map(|v| r * v).collect();
                        c.extend((n_h..n).map(|_| rng.range(-0.5, 0.5)));
                        c
                    }
                    Some(d) => d
                        .center
                        .iter()
                        .zip(&d.scale)
                        .map(|(c, s)| c + rng.range(-0.5, 0.5) * s)
                        .collect(),
                };
                let scale: Vec<f64> = (0..n).map(|_| rng.range(0.35, 0.65)).collect();
                let tilt = rng.direction(n).into_iter().map(|v| 0.5 * v).collect::<Vec<_>>();
                let steep = rng.range(2.0, 5.0);
                let r_min = 0.25_f64.min(0.5 * g.horizontal_norm(&center));
                let f = BumpField::new(g, center.clone(), scale.clone(), r_min)?
                    .with_steepness(steep)?
                    .with_tilt(tilt)?;
                Ok(Drawn {
                    field: Arc::new(f),
                    center,
                    scale,
                })
            }
            FieldFamily::Cylindrical => {
                let nz = n - n_h;
                let (rc, hc) = match near {
                    None => (
                        rng.range(0.9, 1.5),
                        (0..nz).map(|_| rng.range(-0.5, 0.5)).collect::<Vec<_>>(),
                    ),
                    Some(d) => (
                        d.center[0] + rng.range(-0.5, 0.5) * d.scale[0],
                        d.center[1..]
                            .iter()
                            .zip(&d.scale[1..])
                            .map(|(c, s)| c + rng.range(-0.5, 0.5) * s)
                            .collect(),
                    ),
                };
                let rs = rng.range(0.35, 0.65).min(rc - 0.2);
                let hs: Vec<f64> = (0..nz).map(|_| rng.range(0.35, 0.65)).collect();
                let tilt = rng.direction(nz + 1).into_iter().map(|v| 0.5 * v).collect();
                let steep = rng.range(2.0, 5.0);
                let f = CylindricalBump::new(g, rc, rs, hc.clone(), hs.clone())?
                    .with_steepness(steep)?
                    .with_tilt(tilt)?;
                let mut center = vec![rc];
                center.extend(hc);
                let mut scale = vec![rs];
                scale.extend(hs);
                Ok(Drawn {
                    field: Arc::new(f),
                    center,
                    scale,
                })
            }
        }
    }
}

struct Drawn {
    field: Arc<dyn ScalarField>,
    center: Vec<f64>,
    scale: Vec<f64>,
}
