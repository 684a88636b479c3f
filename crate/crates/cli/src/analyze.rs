//! Information measures, exponents and detection thresholds of a model/channel pair.

use overlap_core::montecarlo::read_length;
use overlap_core::reading_channel::{ChannelSpec, ExponentRecord};
use overlap_core::source_models::SourceModelSpec;
use overlap_core::{
    chernoff_exponents, min_detectable_overlap, pair_statistics, theta_star, Channel64, MdoSetting, OverlapPrior,
    RenyiOrder, SourceModel64,
};
use serde::{Deserialize, Serialize};

fn default_n() -> u64 {
    1 << 20
}

fn default_beta() -> f64 {
    3.0
}

fn default_epsilon() -> f64 {
    0.1
}

fn default_lags() -> Vec<usize> {
    vec![1, 2, 4, 8]
}

fn default_orders() -> Vec<f64> {
    vec![0.5, 2.0]
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyzeConfig {
    pub model: SourceModelSpec,
    #[serde(default)]
    pub channel: Option<ChannelSpec>,
    #[serde(default = "default_n")]
    pub n: u64,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_lags")]
    pub lags: Vec<usize>,
    #[serde(default = "default_orders")]
    pub renyi_orders: Vec<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Quantity {
    pub value: f64,
    pub unit: String,
}

impl Quantity {
    fn new(value: f64, unit: &str) -> Self {
        Self {
            value,
            unit: unit.to_string(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RenyiEntry {
    pub order: f64,
    pub value: Quantity,
    pub approximate: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct LagEntry {
    pub lag: usize,
    pub mixing_bound: Quantity,
    pub recurrence: Quantity,
}

#[derive(Clone, Debug, Serialize)]
pub struct ChannelAnalysis {
    pub mutual_information: Quantity,
    pub mutual_information_nats: Quantity,
    pub ln_lambda_min: Quantity,
    pub ln_lambda_max: Quantity,
    pub exponents: Vec<ExponentRecord>,
    pub theta_star: Option<Quantity>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Analysis {
    pub alphabet: usize,
    pub n: u64,
    pub ell: usize,
    pub entropy_rate: Quantity,
    pub renyi: Vec<RenyiEntry>,
    pub h_minus_inf: Quantity,
    pub lags: Vec<LagEntry>,
    pub channel: Option<ChannelAnalysis>,
    pub t_mdo: Option<Quantity>,
    pub t_mdo_map: Option<Quantity>,
    pub t_star: Option<Quantity>,
    pub flags: Vec<String>,
}

/// Builds the analysis; errors come back as display strings for the caller to classify.
pub fn analyze(config: &AnalyzeConfig) -> Result<Analysis, String> {
    let err = |e: overlap_core::Error| e.to_string();
    let model = SourceModel64::from_spec(&config.model).map_err(err)?;
    let k = model.alphabet_size();
    let base = format!("base-{k}");
    let channel = match &config.channel {
        Some(spec) => Channel64::from_spec(spec).map_err(err)?,
        None => Channel64::identity(k),
    };
    if channel.input_size() != k {
        return Err("channel input alphabet does not match the source".into());
    }
    if !(config.beta > 0.0) || !(config.epsilon > 0.0 && config.epsilon < 1.0) {
        return Err("beta must be positive and epsilon in (0, 1)".into());
    }
    let ell = read_length(config.beta, config.n, k);
    OverlapPrior::new(config.n, ell).map_err(err)?;
    let mut flags = Vec::new();

    let renyi = config
        .renyi_orders
        .iter()
        .map(|&a| {
            let r = model.renyi_entropy_rate(RenyiOrder::Finite(a)).map_err(err)?;
            Ok(RenyiEntry {
                order: a,
                value: Quantity::new(r.value, &base),
                approximate: r.approximate,
            })
        })
        .collect::<Result<Vec<_>, String>>()?;
    let h_minus_inf = model.renyi_entropy_rate(RenyiOrder::NegInfinity).map_err(err)?.value;
    let lags = config
        .lags
        .iter()
        .map(|&s| {
            Ok(LagEntry {
                lag: s,
                mixing_bound: Quantity::new(model.mixing_coefficient_bound(s).map_err(err)?, "probability"),
                recurrence: Quantity::new(model.recurrence_probability(s).map_err(err)?, "probability"),
            })
        })
        .collect::<Result<Vec<_>, String>>()?;

    let log_k_n = (config.n as f64).ln() / (k as f64).ln();
    let entropy = model.entropy_rate();
    let mut rate = entropy;
    let mut channel_report = None;
    let (t_mdo, t_mdo_map) = if channel.is_identity() {
        let mdo = |mu| min_detectable_overlap(MdoSetting::Noiseless(&model), config.n, ell, mu).map_err(err);
        (mdo(Some(1.0))?.value(), mdo(None)?.value())
    } else {
        (None, None)
    };
    if model.is_memoryless() {
        let stats = pair_statistics(model.marginal(), &channel).map_err(err)?;
        let mi = stats.mutual_info();
        let informative = mi > 0.0 && stats.mutual_info_nats() > f64::EPSILON;
        let mut exponents = Vec::new();
        let mut theta = None;
        if informative {
            let prior = OverlapPrior::new(config.n, ell).map_err(err)?;
            exponents = chernoff_exponents(&stats, prior.n_ell() as f64, ell).map_err(err)?.records(k);
            theta = Some(Quantity::new(theta_star(&stats, config.epsilon).map_err(err)?, &base));
        } else {
            flags.push("detection impossible: I = 0".to_string());
        }
        channel_report = Some(ChannelAnalysis {
            mutual_information: Quantity::new(mi, &base),
            mutual_information_nats: Quantity::new(stats.mutual_info_nats(), "nats"),
            ln_lambda_min: Quantity::new(stats.lambda_min().ln(), "nats"),
            ln_lambda_max: Quantity::new(stats.lambda_max().ln(), "nats"),
            exponents,
            theta_star: theta,
        });
        if !channel.is_identity() {
            rate = mi;
        }
    } else if !channel.is_identity() {
        flags.push("channel statistics need a memoryless source".to_string());
    }

    let (t_mdo, t_mdo_map) = if channel.is_identity() {
        (t_mdo, t_mdo_map)
    } else if let Some(c) = &channel_report {
        let lambda_max = c.ln_lambda_max.value.exp();
        let mdo = |mu| {
            min_detectable_overlap::<f64>(MdoSetting::Noisy { lambda_max }, config.n, ell, mu)
                .map_err(err)
                .map(|m| m.value())
        };
        (mdo(Some(1.0))?, mdo(None)?)
    } else {
        (None, None)
    };
    if t_mdo.is_none() && channel_report.is_some() {
        flags.push("no overlap is ever detected: lambda_max <= 1".to_string());
    }
    Ok(Analysis {
        alphabet: k,
        n: config.n,
        ell,
        entropy_rate: Quantity::new(entropy, &base),
        renyi,
        h_minus_inf: Quantity::new(h_minus_inf, &base),
        lags,
        channel: channel_report,
        t_mdo: t_mdo.map(|v| Quantity::new(v, "symbols")),
        t_mdo_map: t_mdo_map.map(|v| Quantity::new(v, "symbols")),
        t_star: (rate > 0.0).then(|| Quantity::new(log_k_n / rate, "symbols")),
        flags,
    })
}
