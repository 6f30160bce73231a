use crate::error::{Error, Result};
use crate::ndmath::{Graph, Tensor, Var};
use crate::sparsity::KlOp;
use crate::varlayers::{BoundModel, Model, ModelNoise, NoiseScope, SeqBatch};

/// Weights of the minibatch objective.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Objective {
    pub scope: NoiseScope,
    /// Multiplier on the KL term (warm-up schedule applied by the caller).
    pub kl_scale: f64,
    pub weight_decay: f64,
    /// Number of training sequences; the KL is divided by it.
    pub dataset_size: usize,
}

/// Value of each term of the minibatch loss.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossParts {
    pub total: f64,
    /// Mean negative log-likelihood per sequence.
    pub nll: f64,
    /// Unscaled KL sum over every weight in scope.
    pub kl: f64,
    /// Unscaled sum of squares of decayed weights.
    pub l2: f64,
}

/// Build the loss on `g`:
/// `mean NLL + kl_scale / dataset_size · KL + weight_decay · Σ W²`.
pub fn elbo_graph(
    g: &mut Graph,
    model: &Model,
    bound: &BoundModel,
    batch: &SeqBatch,
    noise: &ModelNoise,
    obj: &Objective,
) -> Result<(Var, LossParts)> {
    if obj.dataset_size == 0 {
        return Err(Error::Invalid("dataset size must be positive".into()));
    }
    let out = bound.forward(g, model, batch, noise)?;
    let nll_sum = bound.nll(g, out, batch)?;
    let b = batch.batch_size() as f64;
    let mut loss = g.scale(nll_sum, 1.0 / b);
    let mut parts = LossParts {
        nll: g.value(nll_sum).data()[0] / b,
        ..Default::default()
    };

    let names = model.tensor_names();
    let vars = bound.vars();
    let find = |n: &str| names.iter().position(|x| x == n).map(|i| vars[i]);
    if obj.kl_scale > 0.0 {
        let mut kls = Vec::new();
        for (name, _) in obj.scope.variational_weights(model) {
            let (m, l) = (find(&format!("{name}.mean")), find(&format!("{name}.log_sigma2")));
            let (Some(m), Some(l)) = (m, l) else { continue };
            kls.push(g.custom(Box::new(KlOp), &[m, l])?);
        }
        if !kls.is_empty() {
            let kl = sum_vars(g, &kls)?;
            parts.kl = g.value(kl).data()[0];
            let scaled = g.scale(kl, obj.kl_scale / obj.dataset_size as f64);
            loss = g.add(loss, scaled)?;
        }
    }
    if obj.weight_decay > 0.0 {
        let mut sq = Vec::new();
        for (name, &v) in names.iter().zip(vars) {
            if obj.scope.is_decayed(name) {
                let s = g.square(v);
                sq.push(g.sum(s));
            }
        }
        if !sq.is_empty() {
            let l2 = sum_vars(g, &sq)?;
            parts.l2 = g.value(l2).data()[0];
            let scaled = g.scale(l2, obj.weight_decay);
            loss = g.add(loss, scaled)?;
        }
    }
    parts.total = g.value(loss).data()[0];
    Ok((loss, parts))
}

fn sum_vars(g: &mut Graph, vs: &[Var]) -> Result<Var> {
    let mut acc = vs[0];
    for &v in &vs[1..] {
        acc = g.add(acc, v)?;
    }
    Ok(acc)
}

/// Whether a parameter is optimized under this scope. Log-variances outside
/// the Sparse VD layers stay fixed.
pub fn is_trainable(scope: &NoiseScope, name: &str) -> bool {
    !name.ends_with(".log_sigma2") || scope.is_variational(name)
}

/// Loss value for a fixed noise realization.
pub fn elbo_loss(model: &Model, batch: &SeqBatch, noise: &ModelNoise, obj: &Objective) -> Result<LossParts> {
    let mut g = Graph::new();
    let bound = BoundModel::bind(&mut g, model, |_| false);
    Ok(elbo_graph(&mut g, model, &bound, batch, noise, obj)?.1)
}

/// Loss and gradients, aligned with [`Model::tensors`]; fixed parameters get `None`.
pub fn loss_and_grads(
    model: &Model,
    batch: &SeqBatch,
    noise: &ModelNoise,
    obj: &Objective,
) -> Result<(LossParts, Vec<Option<Tensor>>)> {
    let mut g = Graph::new();
    let bound = BoundModel::bind(&mut g, model, |n| is_trainable(&obj.scope, n));
    let (loss, parts) = elbo_graph(&mut g, model, &bound, batch, noise, obj)?;
    if !parts.total.is_finite() {
        return Err(Error::Divergence(format!("loss is {}", parts.total)));
    }
    let mut grads = g.backward(loss)?;
    let names = model.tensor_names();
    let out = names
        .iter()
        .zip(bound.vars())
        .map(|(n, &v)| {
            if is_trainable(&obj.scope, n) {
                Some(grads.take(v).unwrap_or_else(|| Tensor::zeros(g.value(v).shape())))
            } else {
                None
            }
        })
        .collect();
    Ok((parts, out))
}
