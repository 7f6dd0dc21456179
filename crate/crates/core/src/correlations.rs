//! Spatial two-point correlations of the environment and their average length.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::ladder_operators;
use crate::mps::MPSState;
use crate::tensor::C64;

/// Which two-point function: 1 = ⟨b_i b_j†⟩, 2 = ⟨b_i† b_j⟩, 3 = ⟨b_i† b_j†⟩, 4 = ⟨b_i b_j⟩.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum CorrelationKind {
    One,
    Two,
    Three,
    Four,
}

impl CorrelationKind {
    pub const ALL: [CorrelationKind; 4] = [Self::One, Self::Two, Self::Three, Self::Four];

    pub fn index(self) -> u8 {
        match self {
            Self::One => 1,
            Self::Two => 2,
            Self::Three => 3,
            Self::Four => 4,
        }
    }
}

impl TryFrom<u8> for CorrelationKind {
    type Error = Error;

    fn try_from(k: u8) -> Result<Self> {
        match k {
            1 => Ok(Self::One),
            2 => Ok(Self::Two),
            3 => Ok(Self::Three),
            4 => Ok(Self::Four),
            _ => Err(Error::Validation(format!("correlation kind must be 1..4, got {k}"))),
        }
    }
}

impl From<CorrelationKind> for u8 {
    fn from(k: CorrelationKind) -> u8 {
        k.index()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationProfile {
    pub kind: CorrelationKind,
    pub reference_site: usize,
    /// `C(ref, ref + j)` for `j = 0..=J_max`.
    pub values: Vec<C64>,
}

impl CorrelationProfile {
    pub fn max_separation(&self) -> usize {
        self.values.len().saturating_sub(1)
    }

    pub fn write_csv(&self, w: impl Write, comment: Option<&str>) -> Result<()> {
        let mut w = w;
        if let Some(c) = comment {
            writeln!(w, "# {c}")?;
        }
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["separation", "re", "im", "abs"])?;
        for (j, z) in self.values.iter().enumerate() {
            out.write_record(&[
                j.to_string(),
                fmt_f64(z.re),
                fmt_f64(z.im),
                fmt_f64(z.norm()),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path, comment: Option<&str>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?, comment)
    }
}

/// Exponent form, round-trips exactly.
pub(crate) fn fmt_f64(x: f64) -> String {
    format!("{x:e}")
}

/// Default reference site: the chain center.
pub fn default_reference_site(n_sites: usize) -> usize {
    n_sites / 2
}

/// Profile `C(ref, ref + j)` for `j = 0..=max_separation`.
pub fn environment_correlations(
    state: &MPSState,
    kind: CorrelationKind,
    reference_site: usize,
    max_separation: usize,
) -> Result<CorrelationProfile> {
    let n = state.n_sites();
    let last = reference_site
        .checked_add(max_separation)
        .filter(|&l| l < n)
        .ok_or_else(|| {
            Error::Validation(format!(
                "reference site {reference_site} + separation {max_separation} outside chain of {n} sites"
            ))
        })?;
    let dims = state.local_dims();
    if dims[reference_site..=last].iter().any(|&d| d != dims[reference_site]) {
        return Err(Error::Dimension("correlation range has mixed local dims".into()));
    }
    let l = ladder_operators(dims[reference_site])?;
    let (a, b) = match kind {
        CorrelationKind::One => (&l.b, &l.b_dagger),
        CorrelationKind::Two => (&l.b_dagger, &l.b),
        CorrelationKind::Three => (&l.b_dagger, &l.b_dagger),
        CorrelationKind::Four => (&l.b, &l.b),
    };
    let values = state.two_point_row(a, reference_site, b, last)?;
    Ok(CorrelationProfile {
        kind,
        reference_site,
        values,
    })
}

/// Translation-averaged profile over the window `first..=last`: entry `k` is the
/// mean of `C(i, i + k)` over every pair inside the window. `reference_site`
/// is set to `first`.
pub fn averaged_correlations(
    state: &MPSState,
    kind: CorrelationKind,
    first: usize,
    last: usize,
) -> Result<CorrelationProfile> {
    if first > last || last >= state.n_sites() {
        return Err(Error::Validation(format!(
            "window {first}..={last} invalid for chain of {} sites",
            state.n_sites()
        )));
    }
    let span = last - first;
    let mut sums = vec![C64::new(0.0, 0.0); span + 1];
    for i in first..=last {
        let row = environment_correlations(state, kind, i, last - i)?;
        for (k, v) in row.values.iter().enumerate() {
            sums[k] += v;
        }
    }
    let values = sums
        .into_iter()
        .enumerate()
        .map(|(k, s)| s / (span + 1 - k) as f64)
        .collect();
    Ok(CorrelationProfile {
        kind,
        reference_site: first,
        values,
    })
}

/// Total profile weight below which a state counts as empty. Solver noise on
/// a vacuum ground state sits around `1e-10` and would otherwise yield an
/// arbitrary length.
pub const EMPTY_PROFILE_WEIGHT: f64 = 1e-9;

/// `sqrt(Σ j²|C_j| / Σ |C_j|)`.
pub fn correlation_length(profile: &CorrelationProfile) -> Result<f64> {
    let total: f64 = profile.values.iter().map(|z| z.norm()).sum();
    if total < EMPTY_PROFILE_WEIGHT {
        return Err(Error::UndefinedLength(format!(
            "correlation profile weight {total:e} is below {EMPTY_PROFILE_WEIGHT:e}"
        )));
    }
    length_of_magnitudes(profile.values.iter().map(|z| z.norm()))
}

pub fn length_of_magnitudes(mags: impl IntoIterator<Item = f64>) -> Result<f64> {
    let (mut num, mut den) = (0.0, 0.0);
    for (j, m) in mags.into_iter().enumerate() {
        let j = j as f64;
        num += j * j * m;
        den += m;
    }
    if !(den > 0.0) || !num.is_finite() {
        return Err(Error::UndefinedLength(
            "correlation profile has no weight".into(),
        ));
    }
    Ok((num / den).sqrt())
}
