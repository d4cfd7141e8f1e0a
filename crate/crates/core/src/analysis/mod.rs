//! Diagnostics: relative condition numbers, fitting error, and the
//! Secretary Problem threshold characterization.

mod err;
mod kappa;
mod probe;
mod threshold;

pub use err::{decayed_average, fitting_error_exact, fitting_error_mc, DecayedAverage, ErrTrace};
pub use kappa::{
    kappa_closed_form_sp, kappa_empirical, kappa_empirical_mc, kappa_from_matrices, KappaReport, RANK_TOL,
};
pub use probe::{ExactProbe, MonteCarloProbe};
pub use threshold::optimal_threshold_from_series;

/// JSON encoding for reals that may be infinite or NaN: finite values are
/// numbers, the rest are the strings `"inf"`, `"-inf"` and `"nan"`.
pub mod extended_f64 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if x.is_finite() {
            s.serialize_f64(*x)
        } else if x.is_nan() {
            s.serialize_str("nan")
        } else if *x > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Str(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(x) => Ok(x),
            Repr::Str(s) => match s.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(serde::de::Error::custom(format!("bad real {other:?}"))),
            },
        }
    }

    pub mod option {
        use serde::{Deserialize, Deserializer, Serializer};

        pub fn serialize<S: Serializer>(x: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
            match x {
                Some(v) => super::serialize(v, s),
                None => s.serialize_none(),
            }
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
            #[derive(Deserialize)]
            struct Wrap(#[serde(with = "super")] f64);
            Ok(Option::<Wrap>::deserialize(d)?.map(|w| w.0))
        }
    }
}
