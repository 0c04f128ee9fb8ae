//! Base prediction algorithms with a uniform fit/predict contract.

mod ensemble;
pub mod features;
pub mod glm;
pub mod tree;

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::Rng;

pub use ensemble::{Booster, Forest};
pub use features::{expand_features, Expansion};
pub use glm::{fit_glm, GlmFit};

use crate::error::{Error, Result};
use crate::numeric::clip_prob;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    Gaussian,
    Binomial,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LearnerKind {
    MeanOnly,
    /// Main-terms GLM.
    Glm,
    /// GLM with every pairwise product of the inputs.
    GlmInteraction,
    /// Additive polynomial GLM; degree 3 stands in for a GAM.
    PolyGlm { degree: u32 },
    Forest {
        n_trees: usize,
        max_depth: usize,
        min_leaf: usize,
        /// Defaults to `ceil(p / 3)`.
        mtry: Option<usize>,
    },
    Boost {
        n_rounds: usize,
        learning_rate: f64,
        max_depth: usize,
    },
}

impl LearnerKind {
    pub fn gam() -> Self {
        LearnerKind::PolyGlm { degree: 3 }
    }

    pub fn default_forest() -> Self {
        LearnerKind::Forest {
            n_trees: 200,
            max_depth: 8,
            min_leaf: 5,
            mtry: None,
        }
    }

    pub fn default_boost() -> Self {
        LearnerKind::Boost {
            n_rounds: 200,
            learning_rate: 0.1,
            max_depth: 2,
        }
    }

    /// The full default library: glm, glm.interaction, gam, forest, boost.
    pub fn default_library() -> Vec<LearnerKind> {
        vec![
            LearnerKind::Glm,
            LearnerKind::GlmInteraction,
            LearnerKind::gam(),
            LearnerKind::default_forest(),
            LearnerKind::default_boost(),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidSpec(m.to_string()));
        match *self {
            LearnerKind::PolyGlm { degree } if degree < 1 || degree > features::MAX_DEGREE => {
                bad("polynomial degree must be in 1..=4")
            }
            LearnerKind::Forest { n_trees: 0, .. } => bad("forest needs n_trees >= 1"),
            LearnerKind::Forest { max_depth: 0, .. } => bad("forest needs max_depth >= 1"),
            LearnerKind::Forest { min_leaf: 0, .. } => bad("forest needs min_leaf >= 1"),
            LearnerKind::Forest { mtry: Some(0), .. } => bad("forest needs mtry >= 1"),
            LearnerKind::Boost { n_rounds: 0, .. } => bad("boost needs n_rounds >= 1"),
            LearnerKind::Boost { max_depth: 0, .. } => bad("boost needs max_depth >= 1"),
            LearnerKind::Boost { learning_rate, .. }
                if !(learning_rate > 0.0 && learning_rate <= 1.0) =>
            {
                bad("boost learning_rate must be in (0, 1]")
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for LearnerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LearnerKind::MeanOnly => write!(f, "mean"),
            LearnerKind::Glm => write!(f, "glm"),
            LearnerKind::GlmInteraction => write!(f, "glm.interaction"),
            LearnerKind::PolyGlm { degree } => write!(f, "poly{degree}"),
            LearnerKind::Forest { n_trees, max_depth, min_leaf, mtry } => {
                write!(f, "forest({n_trees},{max_depth},{min_leaf}")?;
                match mtry {
                    Some(m) => write!(f, ",{m})"),
                    None => write!(f, ")"),
                }
            }
            LearnerKind::Boost { n_rounds, learning_rate, max_depth } => {
                write!(f, "boost({n_rounds},{learning_rate},{max_depth})")
            }
        }
    }
}

impl FromStr for LearnerKind {
    type Err = Error;

    /// Accepts `mean`, `glm`, `glm.interaction`, `gam`, `polyD`, `forest`,
    /// `forest(trees,depth,min_leaf[,mtry])`, `boost`, `boost(rounds,rate,depth)`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::InvalidSpec(format!("unknown learner `{s}`"));
        let args = |body: &str| -> Result<Vec<String>> {
            let inner = body
                .strip_prefix('(')
                .and_then(|b| b.strip_suffix(')'))
                .ok_or_else(bad)?;
            Ok(inner.split(',').map(|a| a.trim().to_string()).collect())
        };
        let num = |v: &str| v.parse::<usize>().map_err(|_| bad());
        let kind = match s {
            "mean" => LearnerKind::MeanOnly,
            "glm" => LearnerKind::Glm,
            "glm.interaction" => LearnerKind::GlmInteraction,
            "gam" => LearnerKind::gam(),
            "forest" => LearnerKind::default_forest(),
            "boost" => LearnerKind::default_boost(),
            _ if s.starts_with("poly") => LearnerKind::PolyGlm {
                degree: s[4..].parse().map_err(|_| bad())?,
            },
            _ if s.starts_with("forest(") => {
                let a = args(&s[6..])?;
                if a.len() != 3 && a.len() != 4 {
                    return Err(bad());
                }
                LearnerKind::Forest {
                    n_trees: num(&a[0])?,
                    max_depth: num(&a[1])?,
                    min_leaf: num(&a[2])?,
                    mtry: a.get(3).map(|m| num(m)).transpose()?,
                }
            }
            _ if s.starts_with("boost(") => {
                let a = args(&s[5..])?;
                if a.len() != 3 {
                    return Err(bad());
                }
                LearnerKind::Boost {
                    n_rounds: num(&a[0])?,
                    learning_rate: a[1].parse().map_err(|_| bad())?,
                    max_depth: num(&a[2])?,
                }
            }
            _ => return Err(bad()),
        };
        kind.validate()?;
        Ok(kind)
    }
}

/// A learner kind paired with its loss family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearnerSpec {
    pub kind: LearnerKind,
    pub family: Family,
}

impl LearnerSpec {
    pub fn new(kind: LearnerKind, family: Family) -> Result<Self> {
        kind.validate()?;
        Ok(Self { kind, family })
    }
}

impl fmt::Display for LearnerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.kind)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum State {
    Mean(f64),
    Glm {
        fit: GlmFit,
        expansion: Option<Expansion>,
    },
    Forest(Forest),
    Boost(Booster),
}

/// A trained prediction function.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedLearner {
    pub spec: LearnerSpec,
    pub n_columns: usize,
    /// False when an iterative fit stopped at its iteration cap.
    pub converged: bool,
    state: State,
}

fn glm_expansion(kind: LearnerKind) -> Option<Option<Expansion>> {
    match kind {
        LearnerKind::Glm => Some(None),
        LearnerKind::GlmInteraction => Some(Some(Expansion::Interactions)),
        LearnerKind::PolyGlm { degree: 1 } => Some(None),
        LearnerKind::PolyGlm { degree } => Some(Some(Expansion::Polynomial(degree))),
        _ => None,
    }
}

fn expand(x: &DMatrix<f64>, e: Option<Expansion>) -> Result<std::borrow::Cow<'_, DMatrix<f64>>> {
    Ok(match e {
        None => std::borrow::Cow::Borrowed(x),
        Some(e) => std::borrow::Cow::Owned(expand_features(x, e)?),
    })
}

/// Trains `spec` on `(x, y)`.
pub fn fit_learner<R: Rng>(
    spec: &LearnerSpec,
    x: &DMatrix<f64>,
    y: &[f64],
    rng: &mut R,
) -> Result<FittedLearner> {
    spec.kind.validate()?;
    let n = y.len();
    if x.nrows() != n {
        return Err(Error::LengthMismatch {
            what: "x rows".into(),
            expected: n,
            got: x.nrows(),
        });
    }
    if n == 0 {
        return Err(Error::InsufficientData("no rows".into()));
    }
    if spec.family == Family::Binomial && y.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
        return Err(Error::InvalidSpec("binomial response outside [0, 1]".into()));
    }
    let p = x.ncols();
    let mut converged = true;
    let state = match spec.kind {
        LearnerKind::MeanOnly => State::Mean(y.iter().sum::<f64>() / n as f64),
        LearnerKind::Forest {
            n_trees,
            max_depth,
            min_leaf,
            mtry,
        } => {
            if n < 2 * min_leaf {
                return Err(Error::InsufficientData(format!(
                    "forest needs n >= {} rows, got {n}",
                    2 * min_leaf
                )));
            }
            let mtry = mtry.unwrap_or_else(|| p.div_ceil(3)).clamp(1, p.max(1));
            State::Forest(Forest::fit(x, y, spec.family, n_trees, max_depth, min_leaf, mtry, rng))
        }
        LearnerKind::Boost {
            n_rounds,
            learning_rate,
            max_depth,
        } => {
            if n < 2 {
                return Err(Error::InsufficientData("boost needs at least 2 rows".into()));
            }
            State::Boost(Booster::fit(x, y, spec.family, n_rounds, learning_rate, max_depth, rng))
        }
        kind => {
            let expansion = glm_expansion(kind).expect("glm kind");
            let design = expand(x, expansion)?;
            if design.ncols() + 1 > n {
                return Err(Error::TooManyColumns {
                    cols: design.ncols() + 1,
                    rows: n,
                });
            }
            let fit = fit_glm(&*design, y, spec.family, None, None)?;
            converged = fit.converged;
            State::Glm { fit, expansion }
        }
    };
    Ok(FittedLearner {
        spec: *spec,
        n_columns: p,
        converged,
        state,
    })
}

/// Predictions on `x`; binomial outputs lie in `[1e-6, 1 - 1e-6]`.
pub fn predict(model: &FittedLearner, x: &DMatrix<f64>) -> Result<Vec<f64>> {
    if x.ncols() != model.n_columns {
        return Err(Error::ColumnMismatch {
            expected: model.n_columns,
            got: x.ncols(),
        });
    }
    let raw = match &model.state {
        State::Mean(c) => vec![*c; x.nrows()],
        State::Glm { fit, expansion } => fit.predict(&*expand(x, *expansion)?, None),
        State::Forest(f) => f.predict(x),
        State::Boost(b) => b.predict(x),
    };
    Ok(match model.spec.family {
        Family::Gaussian => raw,
        Family::Binomial => raw.into_iter().map(clip_prob).collect(),
    })
}

impl FittedLearner {
    pub fn predict(&self, x: &DMatrix<f64>) -> Result<Vec<f64>> {
        predict(self, x)
    }

    /// Individual tree outputs for row `i` when the learner is a forest.
    pub fn forest_tree_outputs(&self, x: &DMatrix<f64>, i: usize) -> Option<Vec<f64>> {
        match &self.state {
            State::Forest(f) => Some(f.tree_outputs(x, i)),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(7)
    }

    fn gauss(kind: LearnerKind) -> LearnerSpec {
        LearnerSpec::new(kind, Family::Gaussian).unwrap()
    }

    #[test]
    fn constant_outcome_everywhere() {
        let n = 60;
        let x = DMatrix::from_fn(n, 2, |i, j| (i * (j + 1)) as f64 % 7.0);
        let y = vec![2.5; n];
        for kind in [LearnerKind::MeanOnly, LearnerKind::default_forest(), LearnerKind::default_boost()] {
            let m = fit_learner(&gauss(kind), &x, &y, &mut rng()).unwrap();
            let grid = DMatrix::from_fn(5, 2, |i, j| (i + j) as f64 - 3.0);
            for p in m.predict(&grid).unwrap() {
                assert!((p - 2.5).abs() < 1e-12, "{kind}: {p}");
            }
        }
    }

    #[test]
    fn zero_rounds_rejected() {
        let k = LearnerKind::Boost {
            n_rounds: 0,
            learning_rate: 0.1,
            max_depth: 2,
        };
        assert!(matches!(LearnerSpec::new(k, Family::Gaussian), Err(Error::InvalidSpec(_))));
        let k = LearnerKind::Boost {
            n_rounds: 10,
            learning_rate: 1.5,
            max_depth: 2,
        };
        assert!(k.validate().is_err());
    }

    #[test]
    fn forest_step_function() {
        use rand_distr::{Distribution, Uniform};
        let mut r = rng();
        let u = Uniform::new(-1.0, 1.0);
        let n = 500;
        let xs: Vec<f64> = (0..n).map(|_| u.sample(&mut r)).collect();
        let y: Vec<f64> = xs.iter().map(|&x| f64::from(x > 0.0)).collect();
        let x = DMatrix::from_column_slice(n, 1, &xs);
        let spec = gauss(LearnerKind::Forest {
            n_trees: 100,
            max_depth: 3,
            min_leaf: 5,
            mtry: None,
        });
        let m = fit_learner(&spec, &x, &y, &mut r).unwrap();
        let grid: Vec<f64> = (0..201).map(|i| -1.0 + i as f64 / 100.0).collect();
        let pred = m.predict(&DMatrix::from_column_slice(grid.len(), 1, &grid)).unwrap();
        let mse = grid
            .iter()
            .zip(&pred)
            .map(|(&g, &p)| (f64::from(g > 0.0) - p).powi(2))
            .sum::<f64>()
            / grid.len() as f64;
        assert!(mse < 0.05, "mse {mse}");
    }

    #[test]
    fn forest_prediction_is_mean_of_trees() {
        let n = 80;
        let x = DMatrix::from_fn(n, 2, |i, j| ((i * 7 + j * 3) % 11) as f64);
        let y: Vec<f64> = (0..n).map(|i| x[(i, 0)] * 0.5 + x[(i, 1)]).collect();
        let spec = gauss(LearnerKind::Forest {
            n_trees: 20,
            max_depth: 4,
            min_leaf: 3,
            mtry: Some(1),
        });
        let m = fit_learner(&spec, &x, &y, &mut rng()).unwrap();
        let row = DMatrix::from_row_slice(1, 2, &[3.0, 4.0]);
        let outs = m.forest_tree_outputs(&row, 0).unwrap();
        let mean = outs.iter().sum::<f64>() / outs.len() as f64;
        assert!((m.predict(&row).unwrap()[0] - mean).abs() < 1e-12);
    }

    #[test]
    fn exact_glm_predicts_training_outcome() {
        let n = 12;
        let x = DMatrix::from_fn(n, 2, |i, j| (i as f64) * (j as f64 + 1.0) + (i % 3) as f64 * j as f64);
        let y: Vec<f64> = (0..n).map(|i| 1.0 - 2.0 * x[(i, 0)] + 0.5 * x[(i, 1)]).collect();
        let m = fit_learner(&gauss(LearnerKind::Glm), &x, &y, &mut rng()).unwrap();
        for (p, t) in m.predict(&x).unwrap().iter().zip(&y) {
            assert!((p - t).abs() < 1e-9);
        }
    }

    #[test]
    fn column_mismatch() {
        let x = DMatrix::from_fn(10, 2, |i, j| (i + j) as f64);
        let y: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let m = fit_learner(&gauss(LearnerKind::Glm), &x, &y, &mut rng()).unwrap();
        assert!(matches!(
            m.predict(&DMatrix::zeros(3, 3)),
            Err(Error::ColumnMismatch { expected: 2, got: 3 })
        ));
    }

    #[test]
    fn too_many_columns_for_rows() {
        let x = DMatrix::from_fn(6, 4, |i, j| ((i + 1) * (j + 2)) as f64);
        let y = vec![1.0, 2.0, 3.0, 1.0, 2.0, 3.0];
        let err = fit_learner(&gauss(LearnerKind::GlmInteraction), &x, &y, &mut rng()).unwrap_err();
        assert!(matches!(err, Error::TooManyColumns { .. }));
    }

    #[test]
    fn forest_needs_enough_rows() {
        let x = DMatrix::zeros(6, 1);
        let y = vec![0.0; 6];
        let err = fit_learner(&gauss(LearnerKind::default_forest()), &x, &y, &mut rng()).unwrap_err();
        assert!(matches!(err, Error::InsufficientData(_)));
    }

    #[test]
    fn learner_names_round_trip() {
        for s in ["mean", "glm", "glm.interaction", "poly3", "forest(50,6,5)", "forest(10,3,2,1)", "boost(100,0.1,2)"] {
            let k: LearnerKind = s.parse().unwrap();
            assert_eq!(k.to_string(), s);
        }
        assert_eq!("gam".parse::<LearnerKind>().unwrap(), LearnerKind::gam());
        assert!("svm".parse::<LearnerKind>().is_err());
    }
}
