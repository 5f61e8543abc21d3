use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::sampling::{STEP2_WINDOWS, WINDOW_LEN};

/// Encoder and sequential-head hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub window_len: usize,
    pub enc_first_kernel: usize,
    /// Number of filters shared by every encoder convolution.
    pub enc_filters: usize,
    /// Down-sampling stride of each of the four encoder blocks.
    pub enc_strides: [usize; 4],
    /// Kernel of the first convolution inside each residual unit.
    pub res_kernel: usize,
    pub enc_fc_hidden: usize,
    pub feat_dim: usize,
    pub cls_hidden: usize,
    pub dropout_p: f64,
    pub d_model: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    pub ff_dim: usize,
    pub head_hidden: usize,
    pub seq_len: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            window_len: WINDOW_LEN,
            enc_first_kernel: 7,
            enc_filters: 64,
            enc_strides: [4, 4, 5, 8],
            res_kernel: 3,
            enc_fc_hidden: 128,
            feat_dim: 128,
            cls_hidden: 64,
            dropout_p: 0.1,
            d_model: 128,
            n_heads: 4,
            n_layers: 3,
            ff_dim: 256,
            head_hidden: 64,
            seq_len: STEP2_WINDOWS,
        }
    }
}

impl ModelConfig {
    /// Small configuration sized for single-core CPU experiments.
    pub fn desk() -> Self {
        Self {
            enc_filters: 6,
            enc_fc_hidden: 16,
            feat_dim: 8,
            cls_hidden: 8,
            dropout_p: 0.0,
            d_model: 8,
            n_heads: 2,
            n_layers: 3,
            ff_dim: 16,
            head_hidden: 8,
            ..Self::default()
        }
    }

    pub fn total_stride(&self) -> usize {
        self.enc_strides.iter().product()
    }

    /// Time steps left after the four down-sampling blocks.
    pub fn timesteps(&self) -> usize {
        self.window_len / self.total_stride()
    }

    pub fn res_hidden(&self) -> usize {
        (self.enc_filters / 2).max(1)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::InvalidConfig(m));
        if self.enc_strides.contains(&0) || self.window_len % self.total_stride() != 0 {
            return bad(format!(
                "stride product {} must divide window length {}",
                self.total_stride(),
                self.window_len
            ));
        }
        if self.n_heads == 0 || self.d_model % self.n_heads != 0 {
            return bad(format!(
                "d_model {} not divisible by n_heads {}",
                self.d_model, self.n_heads
            ));
        }
        if self.n_layers == 0 {
            return bad("n_layers must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return bad(format!("dropout_p {} outside [0, 1)", self.dropout_p));
        }
        if self.enc_first_kernel % 2 == 0 || self.res_kernel % 2 == 0 {
            return bad("encoder kernels must be odd".into());
        }
        let dims = [
            self.enc_filters,
            self.enc_fc_hidden,
            self.feat_dim,
            self.cls_hidden,
            self.ff_dim,
            self.head_hidden,
            self.seq_len,
        ];
        if dims.contains(&0) {
            return bad("layer widths must be positive".into());
        }
        Ok(())
    }

    pub fn to_kv(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            m.insert(k.to_string(), v);
        };
        put("window_len", self.window_len.to_string());
        put("enc_first_kernel", self.enc_first_kernel.to_string());
        put("enc_filters", self.enc_filters.to_string());
        put(
            "enc_strides",
            self.enc_strides
                .iter()
                .map(|s| s.to_string())
                .collect::<Vec<_>>()
                .join(","),
        );
        put("res_kernel", self.res_kernel.to_string());
        put("enc_fc_hidden", self.enc_fc_hidden.to_string());
        put("feat_dim", self.feat_dim.to_string());
        put("cls_hidden", self.cls_hidden.to_string());
        put("dropout_p", self.dropout_p.to_string());
        put("d_model", self.d_model.to_string());
        put("n_heads", self.n_heads.to_string());
        put("n_layers", self.n_layers.to_string());
        put("ff_dim", self.ff_dim.to_string());
        put("head_hidden", self.head_hidden.to_string());
        put("seq_len", self.seq_len.to_string());
        m
    }

    /// Applies recognised keys on top of `self`; unknown keys are returned to the caller.
    pub fn apply_kv<'a>(
        &mut self,
        kv: impl IntoIterator<Item = (&'a str, &'a str)>,
    ) -> Result<Vec<&'a str>, ModelError> {
        let mut unknown = Vec::new();
        for (k, v) in kv {
            let parse = |v: &str| {
                v.trim()
                    .parse::<usize>()
                    .map_err(|_| ModelError::InvalidConfig(format!("{k}: not an integer: {v}")))
            };
            match k {
                "window_len" => self.window_len = parse(v)?,
                "enc_first_kernel" => self.enc_first_kernel = parse(v)?,
                "enc_filters" => self.enc_filters = parse(v)?,
                "enc_strides" => {
                    let s: Vec<usize> = v.split(',').map(parse).collect::<Result<_, _>>()?;
                    self.enc_strides = s.try_into().map_err(|_| {
                        ModelError::InvalidConfig("enc_strides needs exactly 4 values".into())
                    })?;
                }
                "res_kernel" => self.res_kernel = parse(v)?,
                "enc_fc_hidden" => self.enc_fc_hidden = parse(v)?,
                "feat_dim" => self.feat_dim = parse(v)?,
                "cls_hidden" => self.cls_hidden = parse(v)?,
                "dropout_p" => {
                    self.dropout_p = v.trim().parse().map_err(|_| {
                        ModelError::InvalidConfig(format!("dropout_p: not a number: {v}"))
                    })?
                }
                "d_model" => self.d_model = parse(v)?,
                "n_heads" => self.n_heads = parse(v)?,
                "n_layers" => self.n_layers = parse(v)?,
                "ff_dim" => self.ff_dim = parse(v)?,
                "head_hidden" => self.head_hidden = parse(v)?,
                "seq_len" => self.seq_len = parse(v)?,
                _ => unknown.push(k),
            }
        }
        Ok(unknown)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_compresses_window_to_six_steps() {
        let c = ModelConfig::default();
        c.validate().unwrap();
        assert_eq!(c.timesteps(), 6);
        ModelConfig::desk().validate().unwrap();
    }

    #[test]
    fn kv_round_trip() {
        let c = ModelConfig::desk();
        let kv = c.to_kv();
        let mut d = ModelConfig::default();
        let unknown = d
            .apply_kv(kv.iter().map(|(k, v)| (k.as_str(), v.as_str())))
            .unwrap();
        assert!(unknown.is_empty());
        assert_eq!(c, d);
    }

    #[test]
    fn rejects_incompatible_strides_and_heads() {
        let c = ModelConfig {
            enc_strides: [7, 4, 5, 8],
            ..ModelConfig::default()
        };
        assert!(c.validate().is_err());
        let c = ModelConfig {
            n_heads: 3,
            ..ModelConfig::default()
        };
        assert!(c.validate().is_err());
    }
}
