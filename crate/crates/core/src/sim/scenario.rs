use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::numeric::expit;
use crate::tmle::RegressionSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ScenarioId {
    AteCorrect,
    AteNoInteraction,
    AteNonLinear,
    AteNonNormal,
    Cate,
    MedCorrect,
    MedMisspecYW,
    MedMisspecMWYW,
}

impl ScenarioId {
    pub const ALL: [ScenarioId; 8] = [
        ScenarioId::AteCorrect,
        ScenarioId::AteNoInteraction,
        ScenarioId::AteNonLinear,
        ScenarioId::AteNonNormal,
        ScenarioId::Cate,
        ScenarioId::MedCorrect,
        ScenarioId::MedMisspecYW,
        ScenarioId::MedMisspecMWYW,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioId::AteCorrect => "AteCorrect",
            ScenarioId::AteNoInteraction => "AteNoInteraction",
            ScenarioId::AteNonLinear => "AteNonLinear",
            ScenarioId::AteNonNormal => "AteNonNormal",
            ScenarioId::Cate => "Cate",
            ScenarioId::MedCorrect => "MedCorrect",
            ScenarioId::MedMisspecYW => "MedMisspecYW",
            ScenarioId::MedMisspecMWYW => "MedMisspecMWYW",
        }
    }

    pub fn is_mediation(self) -> bool {
        matches!(
            self,
            ScenarioId::MedCorrect | ScenarioId::MedMisspecYW | ScenarioId::MedMisspecMWYW
        )
    }
}

impl FromStr for ScenarioId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ScenarioId::ALL
            .into_iter()
            .find(|id| id.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::UnknownScenario(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    Tmle,
    Regression,
    Sem,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Tmle => "tmle",
            Method::Regression => "regression",
            Method::Sem => "sem",
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "tmle" => Ok(Method::Tmle),
            "regression" => Ok(Method::Regression),
            "sem" => Ok(Method::Sem),
            other => Err(Error::InvalidOption(format!("unknown method `{other}`"))),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Effect {
    Ate,
    Cate,
    Nde,
    Nie,
    Te,
}

impl Effect {
    pub fn name(self) -> &'static str {
        match self {
            Effect::Ate => "ate",
            Effect::Cate => "cate",
            Effect::Nde => "nde",
            Effect::Nie => "nie",
            Effect::Te => "te",
        }
    }
}

impl FromStr for Effect {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ate" => Ok(Effect::Ate),
            "cate" => Ok(Effect::Cate),
            "nde" => Ok(Effect::Nde),
            "nie" => Ok(Effect::Nie),
            "te" => Ok(Effect::Te),
            other => Err(Error::InvalidOption(format!("unknown effect `{other}`"))),
        }
    }
}

impl fmt::Display for Effect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A data-generating process with its treatment-effect parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scenario {
    pub id: ScenarioId,
    /// Treatment coefficient for the ATE family; unused for mediation.
    pub psi: f64,
}

impl Scenario {
    pub fn new(id: ScenarioId, psi: f64) -> Scenario {
        Scenario { id, psi }
    }

    pub fn mediation(id: ScenarioId) -> Scenario {
        Scenario { id, psi: 0.0 }
    }

    /// `AteCorrect:0.5` for the ATE family, the bare name for mediation.
    pub fn label(&self) -> String {
        if self.id.is_mediation() {
            self.id.name().to_string()
        } else {
            format!("{}:{}", self.id.name(), self.psi)
        }
    }

    pub fn from_label(label: &str) -> Result<Scenario> {
        match label.split_once(':') {
            Some((name, psi)) => {
                let id: ScenarioId = name.parse()?;
                let psi: f64 = psi
                    .trim()
                    .parse()
                    .map_err(|_| Error::UnknownScenario(label.to_string()))?;
                if id.is_mediation() {
                    return Err(Error::UnknownScenario(label.to_string()));
                }
                Ok(Scenario::new(id, psi))
            }
            None => {
                let id: ScenarioId = label.parse()?;
                if !id.is_mediation() {
                    return Err(Error::UnknownScenario(format!("{label} needs a `:psi` suffix")));
                }
                Ok(Scenario::mediation(id))
            }
        }
    }

    /// Effects reported for this scenario.
    pub fn effects(&self) -> Vec<Effect> {
        match self.id {
            ScenarioId::Cate => vec![Effect::Cate],
            id if id.is_mediation() => vec![Effect::Nde, Effect::Nie, Effect::Te],
            _ => vec![Effect::Ate],
        }
    }

    /// Whether `method` can be run on this scenario.
    pub fn supports(&self, method: Method) -> bool {
        match method {
            Method::Tmle => true,
            Method::Regression => !self.id.is_mediation(),
            Method::Sem => self.id.is_mediation(),
        }
    }

    /// Linear model fitted by the regression comparator.
    pub fn regression_spec(&self) -> RegressionSpec {
        let w2w4 = vec![(1, 3)];
        match self.id {
            ScenarioId::AteNoInteraction => RegressionSpec::main_effects(),
            ScenarioId::Cate => RegressionSpec {
                covariate_interactions: w2w4,
                treatment_interactions: vec![0],
            },
            _ => RegressionSpec {
                covariate_interactions: w2w4,
                treatment_interactions: vec![],
            },
        }
    }

    pub fn covariate_names(&self) -> Vec<String> {
        if self.id.is_mediation() {
            vec!["W".into()]
        } else {
            (1..=4).map(|j| format!("W{j}")).collect()
        }
    }
}

/// Covariates `(W1, W2, W3, W4)` of the ATE family.
pub(crate) fn draw_ate_covariates<R: Rng>(rng: &mut R) -> [f64; 4] {
    let w1 = f64::from(rng.gen_bool(0.5));
    let w2 = f64::from(rng.gen_bool(0.65));
    let w3 = f64::from(rng.gen_range(0u8..=4));
    let w4 = f64::from(rng.gen_range(0u8..=5));
    [w1, w2, w3, w4]
}

pub(crate) fn ate_propensity(w: &[f64; 4]) -> f64 {
    expit(-2.5 + 0.05 * w[1] + 0.25 * w[2] + 0.6 * w[3] + 0.4 * w[1] * w[3])
}

/// `E[Y | A = a, W]` for the ATE family.
pub(crate) fn ate_outcome_mean(s: &Scenario, a: f64, w: &[f64; 4]) -> f64 {
    let (t3, t4) = match s.id {
        ScenarioId::AteNonLinear => (0.25 * w[2].powi(4), 0.2 * w[3].powi(4)),
        _ => (0.25 * w[2], 0.2 * w[3]),
    };
    let cate = if s.id == ScenarioId::Cate { 0.5 * a * w[0] } else { 0.0 };
    -1.0 + s.psi * a + 0.1 * w[0] + 0.35 * w[1] + t3 + t4 + 3.0 * w[1] * w[3] + cate
}

pub(crate) fn std_normal<R: Rng>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

pub(crate) fn outcome_noise<R: Rng>(s: &Scenario, rng: &mut R) -> f64 {
    if s.id == ScenarioId::AteNonNormal {
        StudentT::new(2.0).unwrap().sample(rng)
    } else {
        std_normal(rng)
    }
}

pub(crate) fn med_propensity(w: f64) -> f64 {
    expit(0.5 * w)
}

pub(crate) fn med_mediator_mean(s: &Scenario, a: f64, w: f64) -> f64 {
    match s.id {
        ScenarioId::MedMisspecMWYW => a + 0.5 * w * w,
        _ => a + 0.5 * w,
    }
}

pub(crate) fn med_outcome_mean(s: &Scenario, a: f64, m: f64, w: f64) -> f64 {
    match s.id {
        ScenarioId::MedCorrect => 2.0 * a + m + 0.8 * w,
        _ => 2.0 * a + m + 0.8 * w.powi(4),
    }
}

/// Draws a sample of size `n` from the scenario's data-generating process.
pub fn dgp_sample<R: Rng>(s: &Scenario, n: usize, rng: &mut R) -> Result<Dataset> {
    if n < 50 {
        return Err(Error::TooFewRows(n));
    }
    if s.id.is_mediation() {
        let mut w = Vec::with_capacity(n);
        let mut a = Vec::with_capacity(n);
        let mut m = Vec::with_capacity(n);
        let mut y = Vec::with_capacity(n);
        for _ in 0..n {
            let wi = std_normal(rng);
            let ai = f64::from(rng.gen_bool(med_propensity(wi)));
            let mi = med_mediator_mean(s, ai, wi) + std_normal(rng);
            let yi = med_outcome_mean(s, ai, mi, wi) + std_normal(rng);
            w.push(wi);
            a.push(ai);
            m.push(mi);
            y.push(yi);
        }
        Dataset::new(DMatrix::from_vec(n, 1, w), a, y, Some(m), s.covariate_names())
    } else {
        let mut wm = DMatrix::zeros(n, 4);
        let mut a = Vec::with_capacity(n);
        let mut y = Vec::with_capacity(n);
        for i in 0..n {
            let w = draw_ate_covariates(rng);
            let ai = f64::from(rng.gen_bool(ate_propensity(&w)));
            let yi = ate_outcome_mean(s, ai, &w) + outcome_noise(s, rng);
            for j in 0..4 {
                wm[(i, j)] = w[j];
            }
            a.push(ai);
            y.push(yi);
        }
        Dataset::new(wm, a, y, None, s.covariate_names())
    }
}

/// Closed-form value of `effect` under the scenario.
pub fn true_value(s: &Scenario, effect: Effect) -> Result<f64> {
    let bad = || Error::InvalidOption(format!("effect {effect} is not defined for {}", s.label()));
    match (s.id, effect) {
        (ScenarioId::Cate, Effect::Cate) => Ok(s.psi + 0.5),
        (id, Effect::Ate) if !id.is_mediation() && id != ScenarioId::Cate => Ok(s.psi),
        (id, Effect::Nde) if id.is_mediation() => Ok(2.0),
        (id, Effect::Nie) if id.is_mediation() => Ok(1.0),
        (id, Effect::Te) if id.is_mediation() => Ok(3.0),
        _ => Err(bad()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn labels_round_trip() {
        for id in ScenarioId::ALL {
            let s = if id.is_mediation() {
                Scenario::mediation(id)
            } else {
                Scenario::new(id, 1.5)
            };
            assert_eq!(Scenario::from_label(&s.label()).unwrap(), s);
        }
        assert!(matches!(Scenario::from_label("Nope:0.5"), Err(Error::UnknownScenario(_))));
        assert!(Scenario::from_label("AteCorrect").is_err());
    }

    #[test]
    fn truth_table() {
        assert_eq!(true_value(&Scenario::new(ScenarioId::AteCorrect, 0.5), Effect::Ate).unwrap(), 0.5);
        assert_eq!(true_value(&Scenario::new(ScenarioId::Cate, 1.5), Effect::Cate).unwrap(), 2.0);
        let m = Scenario::mediation(ScenarioId::MedMisspecMWYW);
        assert_eq!(true_value(&m, Effect::Nie).unwrap(), 1.0);
        assert!(true_value(&m, Effect::Ate).is_err());
    }

    #[test]
    fn same_seed_same_data() {
        let s = Scenario::new(ScenarioId::AteNonNormal, 0.5);
        let a = dgp_sample(&s, 200, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
        let b = dgp_sample(&s, 200, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
        assert_eq!(a, b);
        assert!(dgp_sample(&s, 49, &mut ChaCha8Rng::seed_from_u64(8)).is_err());
    }
}
