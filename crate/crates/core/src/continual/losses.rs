use crate::dataio::ClassId;
use crate::model::{Bind, Head, ModelState};
use crate::numerics::{Graph, NodeId, Tensor};
use crate::rng::Rng;
use crate::ssl::{byol_graph, infonce_in_batch_graph, CtOutput, SslState};
use crate::{Error, Result};

fn width(t: &Tensor) -> Result<(usize, usize)> {
    match *t.shape() {
        [n, c] if c > 0 => Ok((n, c)),
        ref s => Err(Error::Shape(format!("expected [N, C] logits, got {s:?}"))),
    }
}

fn log_softmax(row: &[f64]) -> Vec<f64> {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    row.iter().map(|v| v - lse).collect()
}

pub fn softmax_rows(t: &Tensor) -> Result<Tensor> {
    let (_, c) = width(t)?;
    let data = t
        .data()
        .chunks_exact(c)
        .flat_map(|r| log_softmax(r).into_iter().map(f64::exp))
        .collect();
    Tensor::new(t.shape().to_vec(), data)
}

/// Mean cross-entropy of `logits [N, C]` against output indices `labels`.
pub fn clf_ct_loss(logits: &Tensor, labels: &[usize]) -> Result<f64> {
    let (n, c) = width(logits)?;
    if labels.len() != n || n == 0 {
        return Err(Error::Shape(format!("{} labels for {n} rows", labels.len())));
    }
    let mut total = 0.0;
    for (row, &y) in logits.data().chunks_exact(c).zip(labels) {
        if y >= c {
            return Err(Error::UnknownLabel(y));
        }
        total -= log_softmax(row)[y];
    }
    Ok(total / n as f64)
}

/// Soft cross-entropy between the teacher's distribution over its `C_old`
/// outputs, used as a pseudo-label over the live classifier's full output
/// space (zero on new classes), and the live softmax.
pub fn clf_kd_loss(teacher_logits: &Tensor, live_logits: &Tensor) -> Result<f64> {
    let (n, c_old) = width(teacher_logits)?;
    let (n2, c) = width(live_logits)?;
    if n != n2 || c < c_old || n == 0 {
        return Err(Error::Shape(format!(
            "teacher logits {:?} vs live logits {:?}",
            teacher_logits.shape(),
            live_logits.shape()
        )));
    }
    let p = softmax_rows(teacher_logits)?;
    let mut total = 0.0;
    for (pr, lr) in p.data().chunks_exact(c_old).zip(live_logits.data().chunks_exact(c)) {
        let lq = log_softmax(lr);
        total -= pr.iter().zip(&lq).map(|(a, b)| a * b).sum::<f64>();
    }
    Ok(total / n as f64)
}

/// One-hot targets over the live classifier's outputs. Unlabelled samples
/// get zero rows. Returns the targets and the number of labelled rows.
pub fn label_targets(live: &ModelState, labels: &[Option<ClassId>]) -> Result<(Tensor, usize)> {
    let c = live.n_classes();
    let mut t = Tensor::zeros(&[labels.len(), c]);
    let mut labelled = 0;
    for (i, l) in labels.iter().enumerate() {
        if let Some(class) = *l {
            let j = live.class_index(class).ok_or(Error::UnknownLabel(class))?;
            t.set(&[i, j], 1.0);
            labelled += 1;
        }
    }
    Ok((t, labelled))
}

/// Cross-entropy over labelled rows; `None` when no row is labelled.
pub fn clf_ct_graph(g: &mut Graph, logits: NodeId, targets: Tensor, labelled: usize) -> Result<Option<NodeId>> {
    if labelled == 0 {
        return Ok(None);
    }
    g.soft_cross_entropy(logits, targets, labelled as f64).map(Some)
}

/// Graph form of [`clf_kd_loss`]; `teacher_logits` are constants.
pub fn clf_kd_graph(g: &mut Graph, live_logits: NodeId, teacher_logits: &Tensor) -> Result<NodeId> {
    let (n, c_old) = width(teacher_logits)?;
    let (n2, c) = width(g.value(live_logits))?;
    if n != n2 || c < c_old {
        return Err(Error::Shape(format!(
            "teacher logits {:?} vs live logits {:?}",
            teacher_logits.shape(),
            g.value(live_logits).shape()
        )));
    }
    let p = softmax_rows(teacher_logits)?;
    let mut targets = Tensor::zeros(&[n, c]);
    for (dst, src) in targets.data_mut().chunks_exact_mut(c).zip(p.data().chunks_exact(c_old)) {
        dst[..c_old].copy_from_slice(src);
    }
    g.soft_cross_entropy(live_logits, targets, n as f64)
}

/// New-task SSL loss over two views.
pub fn fe_ct_loss(
    g: &mut Graph,
    live: &ModelState,
    ssl: &SslState,
    x1: NodeId,
    x2: NodeId,
    rng: Option<&mut Rng>,
) -> Result<CtOutput> {
    ssl.ct_graph(g, live, x1, x2, rng)
}

/// Feature distillation: live projections pass through the distill head and
/// are pulled towards the frozen teacher's projections of the same views,
/// with the configured SSL loss. Averaged over both views.
#[allow(clippy::too_many_arguments)]
pub fn fe_kd_loss(
    g: &mut Graph,
    live: &ModelState,
    teacher: Option<&ModelState>,
    ssl: &SslState,
    x1: NodeId,
    x2: NodeId,
    z1: NodeId,
    z2: NodeId,
) -> Result<NodeId> {
    fe_kd_parts(g, live, teacher, ssl, [x1, x2], [z1, z2]).map(|(loss, _)| loss)
}

/// [`fe_kd_loss`] plus the teacher's (detached) encoder features of view 1.
pub(super) fn fe_kd_parts(
    g: &mut Graph,
    live: &ModelState,
    teacher: Option<&ModelState>,
    ssl: &SslState,
    xs: [NodeId; 2],
    zs: [NodeId; 2],
) -> Result<(NodeId, NodeId)> {
    let teacher = teacher.ok_or(Error::MissingComponent("teacher"))?;
    let mut terms = Vec::with_capacity(2);
    let mut features = Vec::with_capacity(2);
    for (x, z) in xs.into_iter().zip(zs) {
        let d = live.head_graph(g, Head::Distill, z, Bind::Live)?;
        let th = teacher.encoder_graph(g, x, Bind::Detached("teacher."), None)?;
        let tz = teacher.head_graph(g, Head::Projector, th, Bind::Detached("teacher."))?;
        features.push(th);
        terms.push(match ssl {
            SslState::Byol(_) => byol_graph(g, d, tz)?,
            SslState::Moco(m) => {
                let q = g.l2_normalize(d)?;
                let k = g.l2_normalize(tz)?;
                infonce_in_batch_graph(g, q, k, m.temperature)?
            }
        });
    }
    let s = g.add(terms[0], terms[1])?;
    Ok((g.scale(s, 0.5), features[0]))
}
