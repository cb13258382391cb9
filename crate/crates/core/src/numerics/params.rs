use std::collections::BTreeMap;

use num_traits::Float;
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use super::tensor::Matrix;
use crate::error::Error;

/// Named parameter set with deterministic (lexicographic) iteration order.
/// Shapes are fixed at creation; updates must preserve them.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamStore<S> {
    params: BTreeMap<String, Matrix<S>>,
}

#[derive(Serialize, Deserialize)]
struct ParamStoreFile<S> {
    version: u32,
    params: BTreeMap<String, Matrix<S>>,
}

impl<S: Float> Default for ParamStore<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Float> ParamStore<S> {
    pub fn new() -> Self {
        ParamStore {
            params: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, name: &str, value: Matrix<S>) {
        assert!(
            !self.params.contains_key(name),
            "duplicate parameter name {:?}",
            name
        );
        self.params.insert(name.to_string(), value);
    }

    pub fn get(&self, name: &str) -> &Matrix<S> {
        self.params
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter {:?}", name))
    }

    pub fn set(&mut self, name: &str, value: Matrix<S>) {
        let existing = self
            .params
            .get_mut(name)
            .unwrap_or_else(|| panic!("unknown parameter {:?}", name));
        assert_eq!(
            existing.shape(),
            value.shape(),
            "parameter {:?} shape is immutable",
            name
        );
        *existing = value;
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(|s| s.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Matrix<S>)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn num_values(&self) -> usize {
        self.params.values().map(|m| m.data().len()).sum()
    }
}

impl<S: Float + Serialize + DeserializeOwned> ParamStore<S> {
    /// JSON form: {"version":1,"params":{name:{"rows":r,"cols":c,"data":[...]}}}.
    /// Floats use shortest-representation encoding, which round-trips exactly.
    pub fn to_json(&self) -> String {
        serde_json::to_string(&ParamStoreFile {
            version: 1,
            params: self.params.clone(),
        })
        .expect("param store serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self, Error> {
        let file: ParamStoreFile<S> =
            serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
        if file.version != 1 {
            return Err(Error::Format(format!(
                "unsupported param store version {}",
                file.version
            )));
        }
        Ok(ParamStore {
            params: file.params,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn iteration_is_lexicographic() {
        let mut store = ParamStore::<f64>::new();
        store.insert("b", Matrix::zeros(1, 1));
        store.insert("a", Matrix::zeros(1, 1));
        store.insert("c", Matrix::zeros(1, 1));
        let names: Vec<&str> = store.names().collect();
        assert_eq!(names, vec!["a", "b", "c"]);
    }

    #[test]
    #[should_panic(expected = "duplicate parameter name")]
    fn duplicate_name_rejected() {
        let mut store = ParamStore::<f64>::new();
        store.insert("w", Matrix::zeros(1, 1));
        store.insert("w", Matrix::zeros(1, 1));
    }

    #[test]
    #[should_panic(expected = "shape is immutable")]
    fn shape_change_rejected() {
        let mut store = ParamStore::<f64>::new();
        store.insert("w", Matrix::zeros(2, 2));
        store.set("w", Matrix::zeros(2, 3));
    }

    #[test]
    fn json_round_trip_is_exact() {
        let mut store = ParamStore::<f64>::new();
        // Values chosen to stress shortest-repr round-tripping.
        store.insert(
            "w",
            Matrix::from_rows(&[vec![0.1, 1.0 / 3.0, -2.5e-17], vec![1e300, -0.0, 5.0]]),
        );
        let back = ParamStore::<f64>::from_json(&store.to_json()).unwrap();
        assert_eq!(store, back);
    }
}
