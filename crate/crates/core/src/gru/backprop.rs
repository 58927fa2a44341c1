//! Triplet, center and weight-decay losses with reverse-mode gradients
//! through the GRU stack.

use ndarray::{Array1, ArrayView1};

use super::{matvec_t_add, model_forward, outer_add, GruLayerParams, GruModel, LayerTrace, ModelTrace};
use super::{ClientCenters, TrainConfig};
use crate::features::FeatureSequence;
use crate::{par, Error, Result};

/// Anchor and positive are distinct genuine samples of `client`; the negative
/// is a skilled forgery of `client` or a genuine sample of another client.
#[derive(Debug, Clone, Copy)]
pub struct Triplet<'a> {
    pub client: &'a str,
    pub anchor: &'a FeatureSequence,
    pub positive: &'a FeatureSequence,
    pub negative: &'a FeatureSequence,
}

/// `max(d_ap - d_an + margin, 0)`.
pub fn triplet_loss(d_ap: f64, d_an: f64, margin: f64) -> f64 {
    (d_ap - d_an + margin).max(0.0)
}

/// `‖g - center‖ + ‖p - center‖`, unsquared Euclidean norms.
pub fn center_loss(emb_g: &Array1<f64>, emb_p: &Array1<f64>, center: &Array1<f64>) -> Result<f64> {
    for v in [emb_g, emb_p] {
        if v.len() != center.len() {
            return Err(Error::DimensionMismatch {
                expected: center.len(),
                found: v.len(),
            });
        }
    }
    Ok(super::euclidean(emb_g, center) + super::euclidean(emb_p, center))
}

/// Backpropagates `grad_out` (row `t` is `∂L/∂y_t`) through one layer,
/// accumulating parameter gradients into `grads`. Returns `∂L/∂x_t` row-major
/// when `want_inputs` is set.
fn layer_backward(
    layer: &GruLayerParams,
    trace: &LayerTrace,
    grad_out: &[f64],
    grads: &mut GruLayerParams,
    want_inputs: bool,
) -> Vec<f64> {
    let (hd, id) = (trace.hidden, trace.input_dim);
    let mut carry = vec![0.0; hd];
    let mut dx = if want_inputs {
        vec![0.0; trace.steps * id]
    } else {
        Vec::new()
    };
    let mut g = vec![0.0; hd];
    let mut dh = vec![0.0; hd];
    let mut rh = vec![0.0; hd];
    let mut d_rh = vec![0.0; hd];
    let mut da_cand = vec![0.0; hd];
    let mut da_update = vec![0.0; hd];
    let mut da_reset = vec![0.0; hd];
    for t in (0..trace.steps).rev() {
        let x = trace.input(t);
        let h = trace.state(t);
        let r = trace.row(&trace.reset, t);
        let z = trace.row(&trace.update, t);
        let c = trace.row(&trace.cand, t);
        for i in 0..hd {
            g[i] = grad_out[t * hd + i] + carry[i];
            da_cand[i] = g[i] * (1.0 - z[i]) * (1.0 - c[i] * c[i]);
            da_update[i] = g[i] * (h[i] - c[i]) * z[i] * (1.0 - z[i]);
            dh[i] = g[i] * z[i];
            rh[i] = r[i] * h[i];
        }

        outer_add(&mut grads.w_cand, &da_cand, x);
        outer_add(&mut grads.u_cand, &da_cand, &rh);
        grads.b_cand += &ArrayView1::from(&da_cand[..]);
        d_rh.fill(0.0);
        matvec_t_add(&mut d_rh, &layer.u_cand, &da_cand);
        for i in 0..hd {
            dh[i] += d_rh[i] * r[i];
            da_reset[i] = d_rh[i] * h[i] * r[i] * (1.0 - r[i]);
        }

        outer_add(&mut grads.w_update, &da_update, x);
        outer_add(&mut grads.u_update, &da_update, h);
        grads.b_update += &ArrayView1::from(&da_update[..]);
        matvec_t_add(&mut dh, &layer.u_update, &da_update);

        outer_add(&mut grads.w_reset, &da_reset, x);
        outer_add(&mut grads.u_reset, &da_reset, h);
        grads.b_reset += &ArrayView1::from(&da_reset[..]);
        matvec_t_add(&mut dh, &layer.u_reset, &da_reset);

        if want_inputs {
            let out = &mut dx[t * id..(t + 1) * id];
            matvec_t_add(out, &layer.w_cand, &da_cand);
            matvec_t_add(out, &layer.w_update, &da_update);
            matvec_t_add(out, &layer.w_reset, &da_reset);
        }
        std::mem::swap(&mut carry, &mut dh);
    }
    dx
}

/// Accumulates the gradient of a loss with `∂L/∂embedding = d_emb`.
fn model_backward(model: &GruModel, trace: &ModelTrace, d_emb: &Array1<f64>, grads: &mut GruModel) {
    let d_emb = d_emb.as_slice().expect("contiguous gradient");
    let l2 = &trace.layer2;
    outer_add(&mut grads.fc_weight, d_emb, l2.state(l2.steps));
    grads.fc_bias += &ArrayView1::from(d_emb);

    let mut grad_out = vec![0.0; l2.steps * l2.hidden];
    matvec_t_add(&mut grad_out[(l2.steps - 1) * l2.hidden..], &model.fc_weight, d_emb);
    let d_layer1 = layer_backward(&model.layer2, l2, &grad_out, &mut grads.layer2, true);
    layer_backward(&model.layer1, &trace.layer1, &d_layer1, &mut grads.layer1, false);
}

/// `(a - b) / ‖a - b‖`, zero when the points coincide.
fn unit_diff(a: &Array1<f64>, b: &Array1<f64>) -> (f64, Array1<f64>) {
    let diff = a - b;
    let norm = diff.mapv(|v| v * v).sum().sqrt();
    if norm > 0.0 {
        (norm, diff / norm)
    } else {
        (0.0, diff)
    }
}

fn triplet_terms(
    model: &GruModel,
    triplet: &Triplet<'_>,
    center: &Array1<f64>,
    config: &TrainConfig,
) -> Result<(f64, GruModel)> {
    let ta = model_forward(model, triplet.anchor)?;
    let tp = model_forward(model, triplet.positive)?;
    let tn = model_forward(model, triplet.negative)?;
    let (ea, ep, en) = (&ta.embedding, &tp.embedding, &tn.embedding);
    if center.len() != ea.len() {
        return Err(Error::DimensionMismatch {
            expected: ea.len(),
            found: center.len(),
        });
    }

    let (d_ap, u_ap) = unit_diff(ea, ep);
    let (d_an, u_an) = unit_diff(ea, en);
    let (d_ac, u_ac) = unit_diff(ea, center);
    let (d_pc, u_pc) = unit_diff(ep, center);

    let mut grad_a = Array1::<f64>::zeros(ea.len());
    let mut grad_p = Array1::<f64>::zeros(ea.len());
    let mut grad_n = Array1::<f64>::zeros(ea.len());

    let hinge = d_ap - d_an + config.margin;
    let mut loss = triplet_loss(d_ap, d_an, config.margin);
    if hinge > 0.0 {
        grad_a += &(&u_ap - &u_an);
        grad_p -= &u_ap;
        grad_n += &u_an;
    }

    loss += config.lambda_center * (d_ac + d_pc);
    grad_a.scaled_add(config.lambda_center, &u_ac);
    grad_p.scaled_add(config.lambda_center, &u_pc);

    let mut grads = model.zeros_like();
    model_backward(model, &ta, &grad_a, &mut grads);
    model_backward(model, &tp, &grad_p, &mut grads);
    if hinge > 0.0 {
        model_backward(model, &tn, &grad_n, &mut grads);
    }
    Ok((loss, grads))
}

/// Summed triplet and weighted center losses over `batch`, plus
/// `lambda_decay * ‖fc_weight‖²`, with the gradient for every parameter.
/// Centers are constants. Triplets are evaluated in parallel and their
/// gradients summed in batch order.
pub fn total_loss(
    batch: &[Triplet<'_>],
    model: &GruModel,
    centers: &ClientCenters,
    config: &TrainConfig,
) -> Result<(f64, GruModel)> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty triplet batch".into()));
    }
    let with_centers = batch
        .iter()
        .map(|t| {
            centers
                .get(t.client)
                .map(|c| (t, c))
                .ok_or_else(|| Error::MissingCenter(t.client.to_string()))
        })
        .collect::<Result<Vec<_>>>()?;

    let parts = par::try_map(&with_centers, |(t, c)| triplet_terms(model, t, c, config))?;
    let mut loss = 0.0;
    let mut grads = model.zeros_like();
    for (l, g) in &parts {
        loss += l;
        grads.accumulate(g);
    }

    loss += config.lambda_decay * model.fc_weight.mapv(|v| v * v).sum();
    grads.fc_weight.scaled_add(2.0 * config.lambda_decay, &model.fc_weight);
    Ok((loss, grads))
}
