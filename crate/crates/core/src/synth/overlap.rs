//! Overlapping-set scenario.
//!
//! `A` is the anomalous set and `A^c` its complement. In view `s` the two
//! classes overlap on a noisy region `B`; in view `q` they overlap on `C`.
//! Each class is described by four conditional cell masses:
//!
//! ```text
//!   within A:    c1 = P(A∖B∖C | A)   c2 = P((A∖B) ∩ C | A)   c3 = P(B ∩ (A∖C) | A)
//!   within A^c:  c4 = P(A^c∖B∖C | A^c)   c5 = P((A^c∖B) ∩ C | A^c)   c6 = P(B ∩ (A^c∖C) | A^c)
//! ```
//!
//! The remaining mass of each class sits in `B ∩ C`. Regions are indexed
//! `0 = anomalous-only`, `1 = overlap`, `2 = normal-only` in both views.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{CoadError, Result, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    /// `A∖B` in s, `A∖C` in q.
    AnomalousOnly = 0,
    /// `B` in s, `C` in q.
    Overlap = 1,
    /// `A^c∖B` in s, `A^c∖C` in q.
    NormalOnly = 2,
}

impl Region {
    pub const ALL: [Region; 3] = [Region::AnomalousOnly, Region::Overlap, Region::NormalOnly];

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapScenario<T> {
    pub p_a: T,
    pub c: [T; 6],
}

/// Joint cell probabilities, split by class. `[i][j]` is s-region `i`
/// crossed with q-region `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellTable<T> {
    pub anomalous: [[T; 3]; 3],
    pub normal: [[T; 3]; 3],
}

impl<T: Scalar> CellTable<T> {
    pub fn joint(&self) -> [[T; 3]; 3] {
        std::array::from_fn(|i| {
            std::array::from_fn(|j| self.anomalous[i][j].clone() + self.normal[i][j].clone())
        })
    }

    pub fn total(&self) -> T {
        self.joint()
            .iter()
            .flatten()
            .fold(T::zero(), |a, x| a + x.clone())
    }

    pub fn s_marginal(&self) -> [T; 3] {
        let j = self.joint();
        std::array::from_fn(|i| j[i].iter().fold(T::zero(), |a, x| a + x.clone()))
    }

    pub fn q_marginal(&self) -> [T; 3] {
        let j = self.joint();
        std::array::from_fn(|c| j.iter().fold(T::zero(), |a, row| a + row[c].clone()))
    }

    pub fn anomaly_mass(&self) -> T {
        self.anomalous
            .iter()
            .flatten()
            .fold(T::zero(), |a, x| a + x.clone())
    }
}

impl<T: Scalar> OverlapScenario<T> {
    /// Checks ranges only; see [`OverlapScenario::validate`] for the full set.
    pub fn new(p_a: T, c: [T; 6]) -> Result<Self> {
        let s = Self { p_a, c };
        s.check_ranges()?;
        Ok(s)
    }

    /// Scenario where `s` and `q` are independent within each class, given
    /// the per-class probability of landing in the noisy region of each view.
    pub fn from_marginals(
        p_a: T,
        s_noise_anomalous: T,
        q_noise_anomalous: T,
        s_noise_normal: T,
        q_noise_normal: T,
    ) -> Result<Self> {
        let one = T::one();
        let (ba, ca) = (s_noise_anomalous, q_noise_anomalous);
        let (bn, cn) = (s_noise_normal, q_noise_normal);
        let c = [
            (one.clone() - ba.clone()) * (one.clone() - ca.clone()),
            (one.clone() - ba.clone()) * ca.clone(),
            ba * (one.clone() - ca),
            (one.clone() - bn.clone()) * (one.clone() - cn.clone()),
            (one.clone() - bn.clone()) * cn.clone(),
            bn * (one - cn),
        ];
        Self::new(p_a, c)
    }

    fn check_ranges(&self) -> Result<()> {
        let zero = T::zero();
        let one = T::one();
        if !(self.p_a > zero && self.p_a <= T::half()) {
            return Err(CoadError::ScenarioInvalid(format!(
                "P(A) = {:?} must lie in (0, 0.5]",
                self.p_a
            )));
        }
        if let Some(k) = self.c.iter().position(|v| !(v >= &zero)) {
            return Err(CoadError::ScenarioInvalid(format!(
                "c{} is negative",
                k + 1
            )));
        }
        if self.c1() + self.c2() + self.c3() > one {
            return Err(CoadError::ScenarioInvalid("c1 + c2 + c3 > 1".into()));
        }
        if self.c4() + self.c5() + self.c6() > one {
            return Err(CoadError::ScenarioInvalid("c4 + c5 + c6 > 1".into()));
        }
        Ok(())
    }

    pub fn c1(&self) -> T {
        self.c[0].clone()
    }
    pub fn c2(&self) -> T {
        self.c[1].clone()
    }
    pub fn c3(&self) -> T {
        self.c[2].clone()
    }
    pub fn c4(&self) -> T {
        self.c[3].clone()
    }
    pub fn c5(&self) -> T {
        self.c[4].clone()
    }
    pub fn c6(&self) -> T {
        self.c[5].clone()
    }

    pub fn p_normal(&self) -> T {
        T::one() - self.p_a.clone()
    }

    /// P(A∖B)
    pub fn p_a_minus_b(&self) -> T {
        (self.c1() + self.c2()) * self.p_a.clone()
    }
    /// P(A∖C)
    pub fn p_a_minus_c(&self) -> T {
        (self.c1() + self.c3()) * self.p_a.clone()
    }
    /// P(A∖B∖C)
    pub fn p_a_minus_bc(&self) -> T {
        self.c1() * self.p_a.clone()
    }
    /// P(A^c∖B)
    pub fn p_ac_minus_b(&self) -> T {
        (self.c4() + self.c5()) * self.p_normal()
    }
    /// P(A^c∖C)
    pub fn p_ac_minus_c(&self) -> T {
        (self.c4() + self.c6()) * self.p_normal()
    }
    /// P(A^c∖B∖C)
    pub fn p_ac_minus_bc(&self) -> T {
        self.c4() * self.p_normal()
    }
    /// P(A ∪ B)
    pub fn p_a_union_b(&self) -> T {
        self.p_a.clone() + self.p_normal() - self.p_ac_minus_b()
    }
    /// P(A ∪ C)
    pub fn p_a_union_c(&self) -> T {
        self.p_a.clone() + self.p_normal() - self.p_ac_minus_c()
    }
    /// P(B)
    pub fn p_b(&self) -> T {
        T::one() - self.p_a_minus_b() - self.p_ac_minus_b()
    }
    /// P(C)
    pub fn p_c(&self) -> T {
        T::one() - self.p_a_minus_c() - self.p_ac_minus_c()
    }

    /// Fractional levels `d1..d4` of the candidate solutions that saturate
    /// the `μ ≤ 0.5` constraint.
    pub fn d_levels(&self) -> [T; 4] {
        let half = T::half();
        [
            (half.clone() - self.p_a_union_b()) / self.p_ac_minus_b(),
            (half.clone() - self.p_a_union_c()) / self.p_ac_minus_c(),
            half.clone() / self.p_ac_minus_b(),
            half / self.p_ac_minus_c(),
        ]
    }

    pub fn is_noiseless(&self) -> bool {
        self.p_b().is_zero() && self.p_c().is_zero()
    }

    /// Note for scenarios where the critical β does not exist.
    pub fn noise_note(&self) -> Option<&'static str> {
        if self.is_noiseless() {
            Some("no noise, beta_crit undefined")
        } else if self.p_b().is_zero() {
            Some("B is empty, beta_crit undefined")
        } else {
            None
        }
    }

    /// Largest violation of within-class independence of `s` and `q`
    /// (zero when independent).
    pub fn independence_defect(&self) -> T {
        let one = T::one();
        let gap = |a: T, b: T, c: T, rest: T| {
            let l = a * rest;
            let r = b * c;
            if l >= r {
                l - r
            } else {
                r - l
            }
        };
        let da = gap(
            self.c1(),
            self.c2(),
            self.c3(),
            one.clone() - self.c1() - self.c2() - self.c3(),
        );
        let dn = gap(
            self.c4(),
            self.c5(),
            self.c6(),
            one - self.c4() - self.c5() - self.c6(),
        );
        if da >= dn {
            da
        } else {
            dn
        }
    }

    /// Range checks, the ordering `P(A∖B) ≥ P(A∖C)` and the four mild
    /// conditions under which the critical-β result holds.
    pub fn validate(&self) -> Result<()> {
        self.check_ranges()?;
        let half = T::half();
        if self.p_a_minus_b() < self.p_a_minus_c() {
            return Err(CoadError::ScenarioInvalid(
                "ordering: P(A\\B) >= P(A\\C) required (swap the views)".into(),
            ));
        }
        if self.p_a_union_b() > half || self.p_a_union_c() > half {
            return Err(CoadError::ScenarioInvalid(
                "condition 1: P(A u B), P(A u C) <= 0.5".into(),
            ));
        }
        if !(self.p_a_minus_bc() > T::zero()) {
            return Err(CoadError::ScenarioInvalid(
                "condition 2: P(A\\B\\C) > 0".into(),
            ));
        }
        if self.p_ac_minus_bc() < self.p_ac_minus_b() * self.p_ac_minus_c() {
            return Err(CoadError::ScenarioInvalid(
                "condition 3: P(Ac\\B\\C) >= P(Ac\\B) P(Ac\\C)".into(),
            ));
        }
        if self.p_ac_minus_bc() * self.p_a_minus_c() < self.p_a_minus_bc() * self.p_ac_minus_c() {
            return Err(CoadError::ScenarioInvalid(
                "condition 4: P(Ac\\B\\C) P(A\\C) >= P(A\\B\\C) P(Ac\\C)".into(),
            ));
        }
        Ok(())
    }

    /// Exact class-split cell probabilities. Does not validate.
    pub fn cell_table(&self) -> CellTable<T> {
        let one = T::one();
        let z = T::zero;
        let pa = self.p_a.clone();
        let pn = self.p_normal();
        let a_bc = one.clone() - self.c1() - self.c2() - self.c3();
        let n_bc = one - self.c4() - self.c5() - self.c6();
        CellTable {
            anomalous: [
                [self.c1() * pa.clone(), self.c2() * pa.clone(), z()],
                [self.c3() * pa.clone(), a_bc * pa, z()],
                [z(), z(), z()],
            ],
            normal: [
                [z(), z(), z()],
                [z(), n_bc * pn.clone(), self.c6() * pn.clone()],
                [z(), self.c5() * pn.clone(), self.c4() * pn],
            ],
        }
    }

    /// Class-conditional cell masses in a fixed order, for sampling.
    fn class_cells(&self, anomalous: bool) -> [(usize, usize, f64); 4] {
        let f = |v: T| v.approx();
        if anomalous {
            let rest = T::one() - self.c1() - self.c2() - self.c3();
            [
                (0, 0, f(self.c1())),
                (0, 1, f(self.c2())),
                (1, 0, f(self.c3())),
                (1, 1, f(rest)),
            ]
        } else {
            let rest = T::one() - self.c4() - self.c5() - self.c6();
            [
                (2, 2, f(self.c4())),
                (2, 1, f(self.c5())),
                (1, 2, f(self.c6())),
                (1, 1, f(rest)),
            ]
        }
    }
}

/// Region memberships and labels for sampled examples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionSample {
    pub s_region: Vec<Region>,
    pub q_region: Vec<Region>,
    pub labels: Vec<bool>,
    pub seed: u64,
}

impl RegionSample {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn cell_frequencies(&self) -> [[f64; 3]; 3] {
        let mut out = [[0.0; 3]; 3];
        for (s, q) in self.s_region.iter().zip(&self.q_region) {
            out[s.index()][q.index()] += 1.0;
        }
        let n = self.len() as f64;
        out.iter_mut().flatten().for_each(|v| *v /= n);
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OverlapMode {
    Exact,
    Sampled { n: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum OverlapOutput<T> {
    Exact(CellTable<T>),
    Sampled(RegionSample),
}

/// Validates the scenario, then returns the exact table or a seeded sample.
pub fn gen_overlap_scenario<T: Scalar>(
    scenario: &OverlapScenario<T>,
    mode: OverlapMode,
) -> Result<OverlapOutput<T>> {
    scenario.validate()?;
    Ok(match mode {
        OverlapMode::Exact => OverlapOutput::Exact(scenario.cell_table()),
        OverlapMode::Sampled { n, seed } => {
            OverlapOutput::Sampled(sample_overlap(scenario, n, seed)?)
        }
    })
}

/// Draws `n` examples: label first, then a cell from that class.
pub fn sample_overlap<T: Scalar>(
    scenario: &OverlapScenario<T>,
    n: usize,
    seed: u64,
) -> Result<RegionSample> {
    scenario.validate()?;
    if n == 0 {
        return Err(CoadError::Empty("sample size"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p_a = scenario.p_a.approx();
    let cells = [scenario.class_cells(false), scenario.class_cells(true)];
    let mut out = RegionSample {
        s_region: Vec::with_capacity(n),
        q_region: Vec::with_capacity(n),
        labels: Vec::with_capacity(n),
        seed,
    };
    for _ in 0..n {
        let anomalous = rng.gen_bool(p_a);
        let table = &cells[anomalous as usize];
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut pick = table[3];
        for &cell in table.iter() {
            acc += cell.2;
            if u < acc {
                pick = cell;
                break;
            }
        }
        out.s_region.push(Region::ALL[pick.0]);
        out.q_region.push(Region::ALL[pick.1]);
        out.labels.push(anomalous);
    }
    Ok(out)
}
