use std::path::Path;

use crate::error::{Error, Result};
use crate::net::config::NetworkConfig;
use crate::net::nbnet::NbNet;
use crate::net::params::ParamStore;
use crate::numerics::container::TensorContainer;
use crate::numerics::{Scalar, Tensor};

/// Everything needed to resume training.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState<T: Scalar> {
    pub config: NetworkConfig,
    pub params: ParamStore<T>,
    /// Adam first moments, same names and shapes as `params`.
    pub m: ParamStore<T>,
    /// Adam second moments.
    pub v: ParamStore<T>,
    pub step: u64,
    pub seed: u64,
}

pub fn build<T: Scalar>(config: &NetworkConfig, seed: u64) -> Result<TrainState<T>> {
    let net = NbNet::new(config)?;
    let params = net.init_params(seed);
    let zeros = || {
        let mut z = ParamStore::new();
        for (k, t) in params.iter() {
            z.insert_zeros(k, t.shape());
        }
        z
    };
    Ok(TrainState { config: config.clone(), m: zeros(), v: zeros(), params, step: 0, seed })
}

impl<T: Scalar> TrainState<T> {
    pub fn net(&self) -> Result<NbNet> {
        NbNet::new(&self.config)
    }

    pub fn to_container(&self) -> Result<TensorContainer> {
        let mut c = TensorContainer::new();
        for (prefix, store) in [("param", &self.params), ("adam_m", &self.m), ("adam_v", &self.v)] {
            for (k, t) in store.iter() {
                c.insert(format!("{prefix}/{k}"), t);
            }
        }
        c.set_meta("config", serde_json::to_string(&self.config)?);
        c.set_meta("step", self.step.to_string());
        c.set_meta("seed", self.seed.to_string());
        Ok(c)
    }

    /// Rebuilds a state from a container, looking tensors up by the names the
    /// stored config implies. Extra entries are ignored; missing moments are
    /// zero-filled so inference-only files load too.
    pub fn from_container(c: &TensorContainer) -> Result<Self> {
        let config: NetworkConfig =
            serde_json::from_str(c.meta("config").ok_or_else(|| Error::MissingTensor("meta.config".into()))?)?;
        let parse = |key: &str| -> Result<u64> {
            c.meta(key)
                .unwrap_or("0")
                .parse()
                .map_err(|_| Error::Config(format!("checkpoint meta {key} is not an integer")))
        };
        let template = NbNet::new(&config)?.init_params::<T>(0);
        let mut state = TrainState {
            params: ParamStore::new(),
            m: ParamStore::new(),
            v: ParamStore::new(),
            step: parse("step")?,
            seed: parse("seed")?,
            config,
        };
        for (name, t) in template.iter() {
            let p: Tensor<T> = c.get(&format!("param/{name}"))?;
            if p.shape() != t.shape() {
                return Err(Error::Config(format!("{name}: stored shape {:?}, expected {:?}", p.shape(), t.shape())));
            }
            state.params.insert(name.clone(), p);
            for (prefix, store) in [("adam_m", &mut state.m), ("adam_v", &mut state.v)] {
                let key = format!("{prefix}/{name}");
                let moment = if c.contains(&key) { c.get(&key)? } else { Tensor::zeros(t.shape()) };
                store.insert(name.clone(), moment);
            }
        }
        Ok(state)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_container()?.save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_container(&TensorContainer::load(path)?)
    }
}
