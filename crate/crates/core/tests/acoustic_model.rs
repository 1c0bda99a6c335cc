mod common;

use candle_core::{DType, IndexOp};
use common::*;
use proptest::prelude::*;
use songbridge::acoustic::{am_loss, extract_latents, AdversarialMode};

#[test]
fn teacher_forced_shapes() {
    let net = tiny_am(DType::F32, 1);
    let (batch, mel) = random_batch(3, &[7, 4, 5], DType::F32);
    let out = net.forward_teacher_forced(&batch, &mel, None).unwrap();
    assert_eq!(out.mel_pre.dims(), &[3, 7, TINY_MELS]);
    assert_eq!(out.mel_post.dims(), &[3, 7, TINY_MELS]);
    assert_eq!(out.style_logits.dims(), &[3, 7, 2]);
    assert_eq!(out.latent.dims(), &[3, 7, 3]);
    assert_eq!(extract_latents(&net, &batch, &mel).unwrap().len(), 7 + 4 + 5);
    let wrong = mel.narrow(1, 0, 6).unwrap();
    assert!(net.forward_teacher_forced(&batch, &wrong, None).is_err());
}

#[test]
fn padding_and_batch_order_do_not_change_outputs() {
    let net = tiny_am(DType::F64, 2);
    let (batch, mel) = random_batch(5, &[6, 3], DType::F64);
    let together = net.forward_teacher_forced(&batch, &mel, None).unwrap();
    let free = net.infer(&batch, None).unwrap();
    for (b, len) in [(0usize, 6usize), (1, 3)] {
        let (single, single_mel) = {
            let sub = songbridge::acoustic::AmBatch {
                phoneme: batch.phoneme.i((b..b + 1, ..len)).unwrap(),
                frame_pos: batch.frame_pos.i((b..b + 1, ..len)).unwrap(),
                speaker: batch.speaker.i((b..b + 1, ..len)).unwrap(),
                style: batch.style.i((b..b + 1, ..len)).unwrap(),
                lf0: batch.lf0.i((b..b + 1, ..len)).unwrap(),
                mask: batch.mask.i((b..b + 1, ..len)).unwrap(),
                lengths: vec![len],
            };
            (sub, mel.i((b..b + 1, ..len)).unwrap())
        };
        let alone = net.forward_teacher_forced(&single, &single_mel, None).unwrap();
        let a = values(&alone.mel_post);
        let t = values(&together.mel_post.i((b..b + 1, ..len)).unwrap());
        assert!(a.iter().zip(&t).all(|(x, y)| (x - y).abs() < 1e-12), "teacher-forced utterance {b}");
        let fa = values(&net.infer(&single, None).unwrap());
        let ft = values(&free.i((b..b + 1, ..len)).unwrap());
        assert!(fa.iter().zip(&ft).all(|(x, y)| (x - y).abs() < 1e-12), "free-running utterance {b}");
    }
    let pad = values(&free.i((1, 3..)).unwrap());
    assert!(pad.iter().all(|v| *v == 0.0));
}

/// Reversed and plain connections differ only in the sign of the
/// adversarial gradient reaching parameters before the classifier.
#[test]
fn reversal_flips_only_the_adversarial_gradient_upstream() {
    let lambda = 0.7;
    let (batch, mel) = random_batch(9, &[5, 4], DType::F64);
    let grads = |mode: AdversarialMode, lambda: f64| {
        let mut net = tiny_am(DType::F64, 4);
        net.adversarial = mode;
        let out = net.forward_teacher_forced(&batch, &mel, None).unwrap();
        let loss = am_loss(&net, &out, &mel, &batch, lambda, 1e-3).unwrap();
        let g = loss.total.backward().unwrap();
        net.ps
            .named()
            .map(|(n, v, _)| (n.to_string(), g.get(v.as_tensor()).map(values).unwrap_or_default()))
            .collect::<Vec<_>>()
    };
    let reversed = grads(AdversarialMode::Reversed, lambda);
    let identity = grads(AdversarialMode::Identity, lambda);
    let recon = grads(AdversarialMode::Identity, 0.0);
    let mut upstream_checked = 0;
    for ((name, r), ((_, i), (_, z))) in reversed.iter().zip(identity.iter().zip(&recon)) {
        if name.starts_with("classifier.") {
            assert_eq!(r, i, "{name}");
            continue;
        }
        let z = if z.is_empty() { vec![0.0; r.len()] } else { z.clone() };
        for k in 0..r.len() {
            let mid = 0.5 * (r[k] + i[k]);
            assert!((mid - z[k]).abs() < 1e-10, "{name}[{k}]: {mid} vs {}", z[k]);
        }
        if name.starts_with("dat") || name.starts_with("prenet") {
            assert!(r.iter().zip(i).any(|(a, b)| (a - b).abs() > 1e-9), "{name} receives no adversarial gradient");
            upstream_checked += 1;
        }
    }
    assert!(upstream_checked > 0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn total_is_the_weighted_sum_of_terms(seed in 0u64..10_000, lambda in 0.0f64..2.0, l2 in 0.0f64..0.01) {
        let net = tiny_am(DType::F64, seed);
        let (batch, mel) = random_batch(seed + 1, &[4, 2, 3], DType::F64);
        let out = net.forward_teacher_forced(&batch, &mel, None).unwrap();
        let v = am_loss(&net, &out, &mel, &batch, lambda, l2).unwrap().values().unwrap();
        let sum = v.recon_mse_pre + v.recon_mse_post + v.l2_reg + lambda * v.adv_ce;
        prop_assert!((v.total - sum).abs() < 1e-6);
        let zero = am_loss(&net, &out, &mel, &batch, 0.0, l2).unwrap().values().unwrap();
        prop_assert_eq!(zero.total, zero.recon_mse_pre + zero.recon_mse_post + zero.l2_reg);
    }
}
