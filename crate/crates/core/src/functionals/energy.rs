use std::cell::Cell;

use super::RegionalModel;
use crate::error::{Result, SegError};
use crate::grid::{linear_sum, signed_distance, Image, Labeling, ScalarField};
use crate::level_set::{length_continuous, DEFAULT_EPSILON};
use crate::trust_region::CroftonStencil;

/// Number of full energy evaluations performed during one run.
#[derive(Debug, Default)]
pub struct EvalCounter(Cell<u64>);

impl EvalCounter {
    pub fn increment(&self) {
        self.0.set(self.0.get() + 1);
    }

    pub fn get(&self) -> u64 {
        self.0.get()
    }
}

/// How the boundary length of a discrete mask is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LengthConvention {
    /// `sum delta_eps(phi) |grad phi|` over the signed distance of the mask.
    Continuous,
    /// Cut cost under Cauchy–Crofton edge weights.
    Crofton,
}

impl LengthConvention {
    pub fn name(self) -> &'static str {
        match self {
            LengthConvention::Continuous => "continuous",
            LengthConvention::Crofton => "crofton",
        }
    }
}

/// One weighted term of the composite energy.
#[derive(Debug, Clone)]
pub enum Term {
    Regional { model: RegionalModel, weight: f64 },
    /// Linear functional `<f, S>`.
    Unary { field: ScalarField, weight: f64 },
    Length { weight: f64 },
}

impl Term {
    fn weight(&self) -> f64 {
        match self {
            Term::Regional { weight, .. } | Term::Unary { weight, .. } | Term::Length { weight } => {
                *weight
            }
        }
    }
}

/// Breakdown of one energy evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyReport {
    pub total: f64,
    /// Sum of weighted regional terms.
    pub regional: f64,
    /// Sum of weighted unary terms.
    pub unary: f64,
    pub length_continuous: f64,
    pub length_crofton: f64,
    pub length_weight: f64,
    /// Convention that produced the length inside `total`.
    pub convention: LengthConvention,
    /// Weighted value of each term, in term order.
    pub contributions: Vec<f64>,
    /// Counter value right after this evaluation.
    pub evaluations: u64,
}

impl EnergyReport {
    /// Everything except the length term.
    pub fn data_term(&self) -> f64 {
        self.regional + self.unary
    }

    pub fn total_under(&self, convention: LengthConvention) -> f64 {
        let len = match convention {
            LengthConvention::Continuous => self.length_continuous,
            LengthConvention::Crofton => self.length_crofton,
        };
        self.data_term() + self.length_weight * len
    }
}

/// `E(S) = sum_k weight_k * term_k(S)`.
#[derive(Debug, Clone)]
pub struct Energy {
    terms: Vec<Term>,
    convention: LengthConvention,
    stencil: CroftonStencil,
    epsilon: f64,
}

impl Energy {
    pub fn new(terms: Vec<Term>, convention: LengthConvention) -> Result<Self> {
        if terms.is_empty() {
            return Err(SegError::InvalidArgument("energy needs at least one term".into()));
        }
        for t in &terms {
            let w = t.weight();
            if !(w.is_finite() && w >= 0.0) {
                return Err(SegError::InvalidArgument(format!(
                    "term weights must be finite and nonnegative, got {w}"
                )));
            }
            if let Term::Unary { field, .. } = t {
                if !field.is_finite() {
                    return Err(SegError::InvalidArgument("unary field must be finite".into()));
                }
            }
        }
        Ok(Self {
            terms,
            convention,
            stencil: CroftonStencil::default(),
            epsilon: DEFAULT_EPSILON,
        })
    }

    pub fn with_stencil(mut self, stencil: CroftonStencil) -> Self {
        self.stencil = stencil;
        self
    }

    /// Dirac width used by the continuous length measure.
    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    /// Same terms measured under another length convention.
    pub fn with_convention(mut self, convention: LengthConvention) -> Self {
        self.convention = convention;
        self
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn convention(&self) -> LengthConvention {
        self.convention
    }

    pub fn stencil(&self) -> &CroftonStencil {
        &self.stencil
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Total weight on boundary length.
    pub fn length_weight(&self) -> f64 {
        self.terms
            .iter()
            .map(|t| match t {
                Term::Length { weight } => *weight,
                _ => 0.0,
            })
            .sum()
    }

    /// Checks term fields and binning against the image grid.
    pub fn check_image(&self, img: &Image) -> Result<()> {
        for t in &self.terms {
            match t {
                Term::Regional { model, .. } => model.check_image(img)?,
                Term::Unary { field, .. } if field.dims() != img.dims() => {
                    return Err(SegError::DimensionMismatch {
                        expected: img.dims(),
                        found: field.dims(),
                    })
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Evaluates every term on `s`; counts as one energy evaluation.
    pub fn report(&self, img: &Image, s: &Labeling, counter: &EvalCounter) -> Result<EnergyReport> {
        s.check_dims(img.dims())?;
        let needs_length = self.terms.iter().any(|t| matches!(t, Term::Length { .. }));
        let (length_continuous, length_crofton) = if needs_length {
            (self.continuous_length(s), self.stencil.length(s))
        } else {
            (0.0, 0.0)
        };
        let length = match self.convention {
            LengthConvention::Continuous => length_continuous,
            LengthConvention::Crofton => length_crofton,
        };

        let mut contributions = Vec::with_capacity(self.terms.len());
        let (mut regional, mut unary, mut length_weight) = (0.0, 0.0, 0.0);
        for t in &self.terms {
            let c = match t {
                Term::Regional { model, weight } => {
                    let c = weight * model.value(img, s)?;
                    regional += c;
                    c
                }
                Term::Unary { field, weight } => {
                    let c = weight * linear_sum(field, s)?;
                    unary += c;
                    c
                }
                Term::Length { weight } => {
                    length_weight += weight;
                    weight * length
                }
            };
            contributions.push(c);
        }
        let total: f64 = contributions.iter().sum();
        if !total.is_finite() {
            return Err(SegError::NonFiniteEnergy(format!(
                "energy evaluated to {total}"
            )));
        }
        counter.increment();
        Ok(EnergyReport {
            total,
            regional,
            unary,
            length_continuous,
            length_crofton,
            length_weight,
            convention: self.convention,
            contributions,
            evaluations: counter.get(),
        })
    }

    /// Continuous length of a mask, measured on its signed distance. Empty and
    /// full masks have no interface and measure 0.
    pub fn continuous_length(&self, s: &Labeling) -> f64 {
        let sd = signed_distance(s);
        if sd.degenerate {
            0.0
        } else {
            length_continuous(&sd.field, self.epsilon)
        }
    }

    /// Per-pixel derivative of all non-length terms at `s`: weighted regional
    /// gradient fields plus weighted unary fields.
    pub fn data_gradient(&self, img: &Image, s: &Labeling) -> Result<ScalarField> {
        let mut g = ScalarField::zeros(img.width(), img.height());
        for t in &self.terms {
            match t {
                Term::Regional { model, weight } => {
                    g.add_scaled(&model.gradient_field(img, s)?, *weight)?
                }
                Term::Unary { field, weight } => g.add_scaled(field, *weight)?,
                Term::Length { .. } => {}
            }
        }
        Ok(g)
    }
}
