use serde::{Deserialize, Serialize};

use super::{
    Alphabet, AtomicStateModel, CodingError, CtwModel, DirichletModel, FactoredCtw, FactoredLogistic, FactoredSad,
    FrequencyModel, GridLayout, LzModel, SadModel, SequentialModel, StateModel,
};

fn default_depth() -> usize {
    2
}

fn default_region() -> usize {
    4
}

fn default_learning_rate() -> f64 {
    0.1
}

fn default_epsilon() -> f64 {
    1e-8
}

fn default_alpha() -> f64 {
    0.5
}

/// Model choice with hyperparameters, as written in experiment configs:
///
/// ```toml
/// kind = "factored-ctw"
/// depth = 3
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelSpec {
    Frequency,
    Dirichlet {
        #[serde(default = "default_alpha")]
        alpha: f64,
    },
    Sad,
    Ctw {
        #[serde(default = "default_depth")]
        depth: usize,
    },
    FactoredCtw {
        #[serde(default = "default_depth")]
        depth: usize,
    },
    FactoredSad {
        #[serde(default = "default_region")]
        region: usize,
    },
    Lz,
    Logistic {
        #[serde(default = "default_depth")]
        depth: usize,
        #[serde(default = "default_learning_rate")]
        learning_rate: f64,
        #[serde(default = "default_epsilon")]
        epsilon: f64,
    },
}

impl ModelSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ModelSpec::Frequency => "frequency",
            ModelSpec::Dirichlet { .. } => "dirichlet",
            ModelSpec::Sad => "sad",
            ModelSpec::Ctw { .. } => "ctw",
            ModelSpec::FactoredCtw { .. } => "factored-ctw",
            ModelSpec::FactoredSad { .. } => "factored-sad",
            ModelSpec::Lz => "lz",
            ModelSpec::Logistic { .. } => "logistic",
        }
    }
}

/// How states are presented to a state model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObservationShape {
    /// One symbol from `0..states`.
    Atomic { states: usize },
    /// A row-major grid of cells over a small alphabet.
    Grid(GridLayout),
}

/// Builds a fresh symbol model over `alphabet`. Factored kinds have no
/// meaning for a plain symbol stream and are rejected.
pub fn build_symbol_model(spec: &ModelSpec, alphabet: Alphabet) -> Result<Box<dyn SequentialModel>, CodingError> {
    Ok(match *spec {
        ModelSpec::Frequency => Box::new(FrequencyModel::new(alphabet)),
        ModelSpec::Dirichlet { alpha } => Box::new(DirichletModel::new(alphabet, alpha)?),
        ModelSpec::Sad => Box::new(SadModel::new(alphabet)),
        ModelSpec::Ctw { depth } => Box::new(CtwModel::new(alphabet, depth)?),
        ModelSpec::Lz => Box::new(LzModel::new(alphabet)),
        ModelSpec::FactoredCtw { .. } | ModelSpec::FactoredSad { .. } | ModelSpec::Logistic { .. } => {
            return Err(CodingError::UnsupportedRole {
                kind: spec.name(),
                role: "a symbol stream",
            })
        }
    })
}

/// Builds a fresh state model for observations of the given shape.
///
/// Symbol kinds work on atomic states. On a grid, `lz` parses the
/// flattened cell sequence; the factored kinds need a grid.
pub fn build_state_model(spec: &ModelSpec, shape: ObservationShape) -> Result<Box<dyn StateModel>, CodingError> {
    match (shape, spec) {
        (ObservationShape::Atomic { states }, ModelSpec::Lz) => Ok(Box::new(LzModel::new(Alphabet::new(states)?))),
        (ObservationShape::Atomic { states }, _) => Ok(Box::new(AtomicStateModel::new(build_symbol_model(
            spec,
            Alphabet::new(states)?,
        )?))),
        (ObservationShape::Grid(layout), ModelSpec::FactoredCtw { depth }) => {
            Ok(Box::new(FactoredCtw::new(layout, *depth)?))
        }
        (ObservationShape::Grid(layout), ModelSpec::FactoredSad { region }) => {
            Ok(Box::new(FactoredSad::new(layout, *region)?))
        }
        (
            ObservationShape::Grid(layout),
            ModelSpec::Logistic {
                depth,
                learning_rate,
                epsilon,
            },
        ) => Ok(Box::new(FactoredLogistic::new(layout, *depth, *learning_rate, *epsilon)?)),
        (ObservationShape::Grid(layout), ModelSpec::Lz) => {
            Ok(Box::new(LzModel::new(Alphabet::new(layout.alphabet)?)))
        }
        (ObservationShape::Grid(_), _) => Err(CodingError::UnsupportedRole {
            kind: spec.name(),
            role: "grid observations",
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_kebab_case_kinds_with_defaults() {
        let s: ModelSpec = toml::from_str("kind = \"factored-sad\"").unwrap();
        assert_eq!(s, ModelSpec::FactoredSad { region: 4 });
        let s: ModelSpec = toml::from_str("kind = \"logistic\"\nlearning_rate = 0.05").unwrap();
        assert_eq!(
            s,
            ModelSpec::Logistic {
                depth: 2,
                learning_rate: 0.05,
                epsilon: 1e-8
            }
        );
        assert!(toml::from_str::<ModelSpec>("kind = \"ctw\"\nregion = 3").is_err());
        assert!(toml::from_str::<ModelSpec>("kind = \"gzip\"").is_err());
    }

    #[test]
    fn roles_are_checked() {
        let grid = ObservationShape::Grid(GridLayout::new(2, 2, 3).unwrap());
        let atomic = ObservationShape::Atomic { states: 5 };
        assert!(build_state_model(&ModelSpec::FactoredCtw { depth: 2 }, atomic).is_err());
        assert!(build_state_model(&ModelSpec::Sad, grid).is_err());
        assert!(build_state_model(&ModelSpec::Lz, grid).is_ok());
        assert!(build_state_model(&ModelSpec::Ctw { depth: 1 }, atomic).is_ok());
        assert!(build_symbol_model(&ModelSpec::FactoredSad { region: 2 }, Alphabet::new(3).unwrap()).is_err());
    }
}
