//! Finite-difference checks for every tape op.
//!
//! The analytic backward pass is validated against central differences on
//! small tensors. Inputs are kept away from the kinks of relu/|.| so the
//! numeric derivative is well-defined.

use super::conv::{Conv2dSpec, Pad};
use super::store::{ParamGroup, ParamStore};
use super::tape::{NodeId, Tape};
use super::tensor::Tensor;

/// Deterministic pseudo-random values in [lo, hi], kink-free for |v| > 0.05.
fn fill(seed: u64, n: usize, lo: f32, hi: f32) -> Vec<f32> {
    let mut state = seed.wrapping_mul(0x9E3779B97F4A7C15).wrapping_add(1);
    (0..n)
        .map(|_| {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            let u = ((state >> 33) as f32) / (u32::MAX >> 1) as f32;
            let mut v = lo + (hi - lo) * u;
            if v.abs() < 0.05 {
                v += 0.1_f32.copysign(if v == 0.0 { 1.0 } else { v });
            }
            v
        })
        .collect()
}

struct Built {
    root: NodeId,
    inputs: Vec<NodeId>,
}

fn check<F>(mut store: ParamStore, inputs: Vec<Tensor>, build: F)
where
    F: Fn(&mut Tape, &ParamStore, &[Tensor]) -> Built,
{
    // Analytic gradients.
    let mut tape = Tape::new();
    let built = build(&mut tape, &store, &inputs);
    store.zero_grads();
    let grads = tape.backward(built.root, &mut store);

    let eval = |store: &ParamStore, inputs: &[Tensor]| -> f32 {
        let mut t = Tape::new();
        let b = build(&mut t, store, inputs);
        t.value(b.root).item()
    };

    let h = 1e-2f32;
    let tol = |a: f32, n: f32| (a - n).abs() <= 0.03 * a.abs().max(n.abs()) + 3e-3;

    // Parameters.
    let ids: Vec<_> = store.iter().map(|(id, _)| id).collect();
    for id in ids {
        let n = store.value(id).numel();
        for i in 0..n {
            let orig = store.value(id).data()[i];
            store.param_mut(id).value.data_mut()[i] = orig + h;
            let fp = eval(&store, &inputs);
            store.param_mut(id).value.data_mut()[i] = orig - h;
            let fm = eval(&store, &inputs);
            store.param_mut(id).value.data_mut()[i] = orig;
            let num = (fp - fm) / (2.0 * h);
            let ana = store.grad(id).data()[i];
            assert!(
                tol(ana, num),
                "param {} [{}]: analytic {} vs numeric {}",
                store.param(id).name,
                i,
                ana,
                num
            );
        }
    }

    // Inputs.
    for (k, node) in built.inputs.iter().enumerate() {
        let analytic = grads[node_index(*node)]
            .clone()
            .unwrap_or_else(|| Tensor::zeros(inputs[k].shape()));
        let mut pert = inputs.clone();
        for i in 0..inputs[k].numel() {
            let orig = pert[k].data()[i];
            pert[k].data_mut()[i] = orig + h;
            let fp = eval(&store, &pert);
            pert[k].data_mut()[i] = orig - h;
            let fm = eval(&store, &pert);
            pert[k].data_mut()[i] = orig;
            let num = (fp - fm) / (2.0 * h);
            let ana = analytic.data()[i];
            assert!(
                tol(ana, num),
                "input {k} [{i}]: analytic {ana} vs numeric {num}"
            );
        }
    }
}

// NodeId field is private to tape.rs; recover the index via Debug.
fn node_index(id: NodeId) -> usize {
    let s = format!("{id:?}");
    s.trim_start_matches("NodeId(")
        .trim_end_matches(')')
        .parse()
        .expect("NodeId debug format")
}

#[test]
fn conv2d_zero_pad_stride2() {
    let spec = Conv2dSpec {
        in_ch: 2,
        out_ch: 3,
        kernel: 3,
        stride: 2,
        pad: Pad::zero(1),
    };
    let mut store = ParamStore::new();
    store.add(
        "w",
        ParamGroup::Encoder,
        Tensor::new(&[3, 18], fill(1, 54, -0.5, 0.5)),
    );
    store.add("b", ParamGroup::Encoder, Tensor::new(&[3], fill(2, 3, -0.2, 0.2)));
    let x = Tensor::new(&[2, 2, 4, 4], fill(3, 64, -1.0, 1.0));
    check(store, vec![x], |t, s, inp| {
        let ids: Vec<_> = s.iter().map(|(id, _)| id).collect();
        let x = t.input(inp[0].clone());
        let y = t.conv2d(s, x, ids[0], ids[1], spec, false);
        let root = t.mse_const(y, 0.37);
        Built {
            root,
            inputs: vec![x],
        }
    });
}

#[test]
fn conv2d_reflect_pad_stride1() {
    let spec = Conv2dSpec {
        in_ch: 1,
        out_ch: 2,
        kernel: 3,
        stride: 1,
        pad: Pad::reflect(1),
    };
    let mut store = ParamStore::new();
    store.add(
        "w",
        ParamGroup::Encoder,
        Tensor::new(&[2, 9], fill(4, 18, -0.5, 0.5)),
    );
    store.add("b", ParamGroup::Encoder, Tensor::new(&[2], fill(5, 2, -0.2, 0.2)));
    let x = Tensor::new(&[1, 1, 5, 4], fill(6, 20, -1.0, 1.0));
    check(store, vec![x], |t, s, inp| {
        let ids: Vec<_> = s.iter().map(|(id, _)| id).collect();
        let x = t.input(inp[0].clone());
        let y = t.conv2d(s, x, ids[0], ids[1], spec, false);
        let root = t.mse_const(y, -0.11);
        Built {
            root,
            inputs: vec![x],
        }
    });
}

#[test]
fn conv2d_asym_pad_k4() {
    let spec = Conv2dSpec {
        in_ch: 1,
        out_ch: 1,
        kernel: 4,
        stride: 1,
        pad: Pad::zero_asym(1, 2),
    };
    let mut store = ParamStore::new();
    store.add(
        "w",
        ParamGroup::Discriminator,
        Tensor::new(&[1, 16], fill(7, 16, -0.5, 0.5)),
    );
    store.add("b", ParamGroup::Discriminator, Tensor::new(&[1], vec![0.1]));
    let x = Tensor::new(&[1, 1, 5, 5], fill(8, 25, -1.0, 1.0));
    check(store, vec![x], |t, s, inp| {
        let ids: Vec<_> = s.iter().map(|(id, _)| id).collect();
        let x = t.input(inp[0].clone());
        let y = t.conv2d(s, x, ids[0], ids[1], spec, false);
        let root = t.mse_const(y, 0.2);
        Built {
            root,
            inputs: vec![x],
        }
    });
}

#[test]
fn conv2d_direct_7x7_reflect() {
    // kernel >= 5 at stride 1 takes the direct (non-im2col) path.
    let spec = Conv2dSpec {
        in_ch: 2,
        out_ch: 1,
        kernel: 7,
        stride: 1,
        pad: Pad::reflect(3),
    };
    let mut store = ParamStore::new();
    store.add(
        "w",
        ParamGroup::Decoder,
        Tensor::new(&[1, 98], fill(30, 98, -0.3, 0.3)),
    );
    store.add("b", ParamGroup::Decoder, Tensor::new(&[1], vec![0.05]));
    let x = Tensor::new(&[2, 2, 8, 8], fill(31, 256, -1.0, 1.0));
    check(store, vec![x], |t, s, inp| {
        let ids: Vec<_> = s.iter().map(|(id, _)| id).collect();
        let x = t.input(inp[0].clone());
        let y = t.conv2d(s, x, ids[0], ids[1], spec, false);
        let root = t.mse_const(y, 0.1);
        Built {
            root,
            inputs: vec![x],
        }
    });
}

#[test]
fn direct_path_matches_im2col_path() {
    // Same 7x7 conv computed directly and via a 2-stride trick that forces
    // the im2col path must agree; compare against a hand-rolled oracle.
    let spec = Conv2dSpec {
        in_ch: 1,
        out_ch: 2,
        kernel: 5,
        stride: 1,
        pad: Pad::zero(2),
    };
    let w = fill(32, 50, -0.4, 0.4);
    let b = [0.1f32, -0.1];
    let x = fill(33, 64, -1.0, 1.0);
    let (y, oh, ow) = crate::nn::conv::conv2d_forward(&x, 1, 8, 8, &w, &b, &spec);
    assert_eq!((oh, ow), (8, 8));
    for co in 0..2 {
        for oy in 0..8usize {
            for ox in 0..8usize {
                let mut acc = b[co];
                for ky in 0..5usize {
                    for kx in 0..5usize {
                        let iy = oy as isize + ky as isize - 2;
                        let ix = ox as isize + kx as isize - 2;
                        if iy >= 0 && iy < 8 && ix >= 0 && ix < 8 {
                            acc += w[(co * 5 + ky) * 5 + kx]
                                * x[iy as usize * 8 + ix as usize];
                        }
                    }
                }
                let got = y[(co * 8 + oy) * 8 + ox];
                assert!((got - acc).abs() < 1e-4, "({co},{oy},{ox}): {got} vs {acc}");
            }
        }
    }
}

#[test]
fn frozen_conv_gets_no_param_grads_but_full_input_grads() {
    let spec = Conv2dSpec {
        in_ch: 1,
        out_ch: 1,
        kernel: 3,
        stride: 1,
        pad: Pad::zero(1),
    };
    let mut store = ParamStore::new();
    let w = store.add(
        "w",
        ParamGroup::Decoder,
        Tensor::new(&[1, 9], fill(9, 9, -0.5, 0.5)),
    );
    let b = store.add("b", ParamGroup::Decoder, Tensor::new(&[1], vec![0.0]));
    let x = Tensor::new(&[1, 1, 4, 4], fill(10, 16, -1.0, 1.0));

    let run = |frozen: bool, store: &mut ParamStore| {
        let mut t = Tape::new();
        let xi = t.input(x.clone());
        let y = t.conv2d(store, xi, w, b, spec, frozen);
        let root = t.mse_const(y, 0.0);
        store.zero_grads();
        let grads = t.backward(root, store);
        let gx = grads[node_index(xi)].clone().unwrap();
        (gx, store.grad(w).clone(), store.grad(b).clone())
    };

    let (gx_unfrozen, gw, gb) = run(false, &mut store);
    assert!(gw.max_abs() > 0.0 && gb.max_abs() > 0.0);
    let (gx_frozen, gw, gb) = run(true, &mut store);
    assert_eq!(gw.max_abs(), 0.0, "frozen conv accumulated weight grads");
    assert_eq!(gb.max_abs(), 0.0, "frozen conv accumulated bias grads");
    assert_eq!(gx_unfrozen, gx_frozen, "freezing must not alter input grads");
}

#[test]
fn linear_tanh_chain() {
    let mut store = ParamStore::new();
    store.add(
        "w",
        ParamGroup::StyleMlp,
        Tensor::new(&[3, 4], fill(11, 12, -0.6, 0.6)),
    );
    store.add("b", ParamGroup::StyleMlp, Tensor::new(&[3], fill(12, 3, -0.2, 0.2)));
    let x = Tensor::new(&[2, 4], fill(13, 8, -1.0, 1.0));
    check(store, vec![x], |t, s, inp| {
        let ids: Vec<_> = s.iter().map(|(id, _)| id).collect();
        let x = t.input(inp[0].clone());
        let y = t.linear(s, x, ids[0], ids[1], false);
        let y = t.tanh(y);
        let root = t.mse_const(y, 0.3);
        Built {
            root,
            inputs: vec![x],
        }
    });
}

#[test]
fn adain_grads_flow_to_content_and_style() {
    let x = Tensor::new(&[2, 2, 3, 3], fill(14, 36, -1.0, 1.0));
    let scale = Tensor::new(&[2, 2], fill(15, 4, 0.5, 1.5));
    let shift = Tensor::new(&[2, 2], fill(16, 4, -0.5, 0.5));
    check(ParamStore::new(), vec![x, scale, shift], |t, _s, inp| {
        let x = t.input(inp[0].clone());
        let sc = t.input(inp[1].clone());
        let sh = t.input(inp[2].clone());
        let y = t.adain(x, sc, sh);
        let root = t.mse_const(y, 0.21);
        Built {
            root,
            inputs: vec![x, sc, sh],
        }
    });
}

#[test]
fn instance_norm_param_grads() {
    let mut store = ParamStore::new();
    store.add(
        "gamma",
        ParamGroup::Discriminator,
        Tensor::new(&[2], fill(17, 2, 0.5, 1.5)),
    );
    store.add(
        "beta",
        ParamGroup::Discriminator,
        Tensor::new(&[2], fill(18, 2, -0.3, 0.3)),
    );
    let x = Tensor::new(&[2, 2, 3, 3], fill(19, 36, -1.0, 1.0));
    check(store, vec![x], |t, s, inp| {
        let ids: Vec<_> = s.iter().map(|(id, _)| id).collect();
        let x = t.input(inp[0].clone());
        let y = t.instance_norm(s, x, ids[0], ids[1], false);
        let root = t.mse_const(y, -0.4);
        Built {
            root,
            inputs: vec![x],
        }
    });
}

#[test]
fn upsample_add_leaky_relu_chain() {
    let x = Tensor::new(&[1, 2, 3, 3], fill(20, 18, 0.2, 1.0));
    let y = Tensor::new(&[1, 2, 6, 6], fill(21, 72, 0.2, 1.0));
    check(ParamStore::new(), vec![x, y], |t, _s, inp| {
        let a = t.input(inp[0].clone());
        let b = t.input(inp[1].clone());
        let up = t.upsample2(a);
        let sum = t.add(up, b);
        let act = t.leaky_relu(sum, 0.2);
        let root = t.mse_const(act, 0.8);
        Built {
            root,
            inputs: vec![a, b],
        }
    });
}

#[test]
fn relu_away_from_kink() {
    let mut vals = fill(22, 16, -1.0, 1.0);
    for v in &mut vals {
        if v.abs() < 0.2 {
            *v = 0.3_f32.copysign(*v);
        }
    }
    let x = Tensor::new(&[1, 1, 4, 4], vals);
    check(ParamStore::new(), vec![x], |t, _s, inp| {
        let x = t.input(inp[0].clone());
        let y = t.relu(x);
        let root = t.mse_const(y, 0.5);
        Built {
            root,
            inputs: vec![x],
        }
    });
}

#[test]
fn slice_cols_routes_grads_into_range() {
    let x = Tensor::new(&[2, 6], fill(23, 12, -1.0, 1.0));
    check(ParamStore::new(), vec![x], |t, _s, inp| {
        let x = t.input(inp[0].clone());
        let sl = t.slice_cols(x, 2, 3);
        let root = t.mse_const(sl, 0.1);
        Built {
            root,
            inputs: vec![x],
        }
    });
}

#[test]
fn l1_between_separated_inputs() {
    let a = Tensor::new(&[2, 3], vec![1.0, 2.0, -1.5, 0.5, 3.0, -0.5]);
    let b = Tensor::new(&[2, 3], vec![0.2, 2.8, -0.5, 1.5, 1.0, 0.7]);
    check(ParamStore::new(), vec![a, b], |t, _s, inp| {
        let a = t.input(inp[0].clone());
        let b = t.input(inp[1].clone());
        let root = t.l1(a, b);
        Built {
            root,
            inputs: vec![a, b],
        }
    });
}

#[test]
fn bce_with_logits_both_targets() {
    for target in [0.0f32, 1.0] {
        let x = Tensor::new(&[1, 1, 2, 2], fill(24, 4, -2.0, 2.0));
        check(ParamStore::new(), vec![x], move |t, _s, inp| {
            let x = t.input(inp[0].clone());
            let root = t.bce_with_logits(x, target);
            Built {
                root,
                inputs: vec![x],
            }
        });
    }
}

#[test]
fn weighted_sum_scales_branch_grads() {
    let a = Tensor::new(&[1, 4], fill(25, 4, -1.0, 1.0));
    let b = Tensor::new(&[1, 4], fill(26, 4, -1.0, 1.0));
    check(ParamStore::new(), vec![a, b], |t, _s, inp| {
        let a = t.input(inp[0].clone());
        let b = t.input(inp[1].clone());
        let la = t.mse_const(a, 0.0);
        let lb = t.mse_const(b, 1.0);
        let root = t.weighted_sum(vec![(la, 20.0), (lb, 0.5)]);
        Built {
            root,
            inputs: vec![a, b],
        }
    });
}

#[test]
fn bce_at_logit_zero_is_ln2() {
    let mut t = Tape::new();
    let x = t.input(Tensor::new(&[1, 1, 2, 2], vec![0.0; 4]));
    let l = t.bce_with_logits(x, 1.0);
    assert!((t.value(l).item() - std::f32::consts::LN_2).abs() < 1e-6);
    let l0 = t.bce_with_logits(x, 0.0);
    assert!((t.value(l0).item() - std::f32::consts::LN_2).abs() < 1e-6);
}
