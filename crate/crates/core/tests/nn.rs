use inkline_core::nn::gradcheck::{check_inputs, check_params};
use inkline_core::nn::layers::{lstm_step, scaled_dot_attention, Conv1d, CrossAttention, DownBlock, LstmCell, UpBlock};
use inkline_core::nn::{Graph, ParamStore, Tensor, Var};
use inkline_core::{Result, Rng};

const TOL: f64 = 1e-4;

type UnaryFn = for<'a, 'b> fn(&'b mut Graph<'a, f64>, Var) -> Var;

fn random(shape: &[usize], rng: &mut Rng) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.normal()).collect()).unwrap()
}

/// Weighted sum with fixed random weights, so every output entry matters.
fn probe(g: &mut Graph<'_, f64>, y: Var, seed: u64) -> Result<Var> {
    let mut rng = Rng::new(seed);
    let shape = g.shape(y).to_vec();
    let w = g.input(random(&shape, &mut rng));
    let p = g.mul(y, w)?;
    Ok(g.sum(p))
}

fn assert_grad(name: &str, inputs: &[Tensor<f64>], f: impl Fn(&mut Graph<'_, f64>, &[Var]) -> Result<Var>) {
    let err = check_inputs(inputs, f).unwrap();
    assert!(err < TOL, "{name}: relative error {err:e}");
}

#[test]
fn matmul_examples() {
    let mut g = Graph::<f64>::new();
    let i = g.input(Tensor::new(&[2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap());
    let m = g.input(Tensor::new(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
    let ones = g.input(Tensor::new(&[2, 1], vec![1.0, 1.0]).unwrap());
    let im = g.matmul(i, m).unwrap();
    assert_eq!(g.value(im).data(), g.value(m).data());
    let mv = g.matmul(m, ones).unwrap();
    assert_eq!(g.value(mv).data(), &[3.0, 7.0]);
    assert!(g.matmul(ones, ones).is_err());
}

#[test]
fn conv_examples() {
    let mut g = Graph::<f64>::new();
    let x = g.input(Tensor::new(&[1, 4], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
    let one = g.input(Tensor::new(&[1, 1, 1], vec![1.0]).unwrap());
    let id = g.conv1d(x, one, 1, 1, 0).unwrap();
    assert_eq!(g.value(id).data(), &[1.0, 2.0, 3.0, 4.0]);
    let pair = g.input(Tensor::new(&[1, 1, 2], vec![1.0, 1.0]).unwrap());
    let y = g.conv1d(x, pair, 2, 1, 0).unwrap();
    assert_eq!(g.value(y).data(), &[3.0, 7.0]);
    let wide = g.input(Tensor::new(&[1, 1, 9], vec![1.0; 9]).unwrap());
    assert!(g.conv1d(x, wide, 1, 1, 0).is_err());
}

fn conv_reference(x: &Tensor<f64>, w: &Tensor<f64>, stride: usize, dilation: usize, padding: usize) -> Vec<f64> {
    let (cin, len) = (x.shape()[0], x.shape()[1]);
    let (cout, k) = (w.shape()[0], w.shape()[2]);
    let out_len = (len + 2 * padding - dilation * (k - 1) - 1) / stride + 1;
    let mut out = vec![0.0; cout * out_len];
    for o in 0..cout {
        for t in 0..out_len {
            let mut s = 0.0;
            for c in 0..cin {
                for j in 0..k {
                    let p = (t * stride + j * dilation) as isize - padding as isize;
                    if p >= 0 && (p as usize) < len {
                        s += w.data()[(o * cin + c) * k + j] * x.data()[c * len + p as usize];
                    }
                }
            }
            out[o * out_len + t] = s;
        }
    }
    out
}

#[test]
fn dilated_conv_matches_nested_loops() {
    let mut rng = Rng::new(3);
    for (len, stride, dilation, padding) in [(11, 1, 3, 3), (16, 2, 3, 1), (9, 1, 3, 0), (20, 2, 1, 1)] {
        let x = random(&[3, len], &mut rng);
        let w = random(&[4, 3, 3], &mut rng);
        let mut g = Graph::<f64>::new();
        let xv = g.input(x.clone());
        let wv = g.input(w.clone());
        let y = g.conv1d(xv, wv, stride, dilation, padding).unwrap();
        let expect = conv_reference(&x, &w, stride, dilation, padding);
        for (a, b) in g.value(y).data().iter().zip(&expect) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(g.value(y).len(), expect.len());
    }
}

#[test]
fn conv_transpose_doubles_length() {
    let mut rng = Rng::new(4);
    for len in [1, 4, 15] {
        let mut g = Graph::<f64>::new();
        let x = g.input(random(&[2, len], &mut rng));
        let w = g.input(random(&[2, 3, 4], &mut rng));
        let y = g.conv_transpose1d(x, w, 2, 1, 1).unwrap();
        assert_eq!(g.shape(y), &[3, 2 * len]);
    }
}

#[test]
fn conv_transpose_is_adjoint_of_conv() {
    let mut rng = Rng::new(5);
    for (len, k, stride, dilation, padding) in [(16, 4, 2, 1, 1), (13, 3, 1, 3, 3), (10, 3, 1, 5, 5), (9, 2, 2, 1, 0)] {
        let (cin, cout) = (3, 2);
        let x = random(&[cin, len], &mut rng);
        let w = random(&[cout, cin, k], &mut rng);
        let mut g = Graph::<f64>::new();
        let xv = g.input(x.clone());
        let wv = g.input(w.clone());
        let cx = g.conv1d(xv, wv, stride, dilation, padding).unwrap();
        let out_len = g.shape(cx)[1];
        let y = random(&[cout, out_len], &mut rng);
        // conv weight [C_out×C_in×k] is already the transposed layout [C_in'×C_out'×k]
        let wt = w.clone();
        let yv = g.input(y.clone());
        let wtv = g.input(wt);
        let ty = g.conv_transpose1d(yv, wtv, stride, dilation, padding).unwrap();
        // conv_transpose may be shorter than len when the conv dropped a tail
        let ty_len = g.shape(ty)[1];
        assert!(ty_len <= len);
        let lhs: f64 = g.value(cx).data().iter().zip(y.data()).map(|(a, b)| a * b).sum();
        let tyd = g.value(ty).data();
        let rhs: f64 = (0..cin).map(|c| (0..ty_len).map(|t| x.data()[c * len + t] * tyd[c * ty_len + t]).sum::<f64>()).sum();
        assert!((lhs - rhs).abs() < 1e-4 * lhs.abs().max(1.0), "{lhs} vs {rhs}");
    }
}

#[test]
fn elementwise_gradients() {
    let mut rng = Rng::new(10);
    let a = random(&[3, 4], &mut rng);
    let b = random(&[3, 4], &mut rng);
    let pos = a.map(|v| v.abs() + 0.5);
    assert_grad("add", &[a.clone(), b.clone()], |g, v| {
        let y = g.add(v[0], v[1])?;
        probe(g, y, 1)
    });
    assert_grad("sub", &[a.clone(), b.clone()], |g, v| {
        let y = g.sub(v[0], v[1])?;
        probe(g, y, 2)
    });
    assert_grad("mul", &[a.clone(), b.clone()], |g, v| {
        let y = g.mul(v[0], v[1])?;
        probe(g, y, 3)
    });
    assert_grad("scale", &[a.clone()], |g, v| {
        let y = g.scale(v[0], 1.7);
        let y = g.add_scalar(y, -0.3);
        probe(g, y, 4)
    });
    let unary: [(&str, UnaryFn); 7] = [
        ("sigmoid", |g, x| g.sigmoid(x)),
        ("tanh", |g, x| g.tanh(x)),
        ("silu", |g, x| g.silu(x)),
        ("softplus", |g, x| g.softplus(x)),
        ("exp", |g, x| g.exp(x)),
        ("abs", |g, x| g.abs(x)),
        ("square", |g, x| g.square(x)),
    ];
    for (name, f) in unary {
        assert_grad(name, &[a.clone()], |g, v| {
            let y = f(g, v[0]);
            probe(g, y, 5)
        });
    }
    assert_grad("ln", &[pos], |g, v| {
        let y = g.ln(v[0]);
        probe(g, y, 6)
    });
}

#[test]
fn broadcast_and_reduction_gradients() {
    let mut rng = Rng::new(11);
    let a = random(&[3, 4], &mut rng);
    let row = random(&[4], &mut rng);
    let col = random(&[3], &mut rng);
    assert_grad("add_row", &[a.clone(), row.clone()], |g, v| {
        let y = g.add_row(v[0], v[1])?;
        probe(g, y, 1)
    });
    assert_grad("mul_row", &[a.clone(), row.clone()], |g, v| {
        let y = g.mul_row(v[0], v[1])?;
        probe(g, y, 2)
    });
    assert_grad("add_col", &[a.clone(), col], |g, v| {
        let y = g.add_col(v[0], v[1])?;
        probe(g, y, 3)
    });
    assert_grad("mean", &[a.clone()], |g, v| {
        let y = g.square(v[0]);
        Ok(g.mean(y))
    });
    assert_grad("mean_rows", &[a.clone()], |g, v| {
        let y = g.mean_rows(v[0])?;
        probe(g, y, 4)
    });
    assert_grad("mean_cols", &[a.clone()], |g, v| {
        let y = g.mean_cols(v[0])?;
        probe(g, y, 5)
    });
    let one_row = random(&[1, 4], &mut rng);
    assert_grad("repeat_rows", &[one_row], |g, v| {
        let y = g.repeat_rows(v[0], 5)?;
        probe(g, y, 6)
    });
}

#[test]
fn structural_gradients() {
    let mut rng = Rng::new(12);
    let a = random(&[3, 4], &mut rng);
    let b = random(&[3, 2], &mut rng);
    let c = random(&[2, 4], &mut rng);
    let m = random(&[4, 5], &mut rng);
    assert_grad("matmul", &[a.clone(), m], |g, v| {
        let y = g.matmul(v[0], v[1])?;
        probe(g, y, 1)
    });
    assert_grad("transpose", &[a.clone()], |g, v| {
        let y = g.transpose(v[0])?;
        probe(g, y, 2)
    });
    assert_grad("reshape", &[a.clone()], |g, v| {
        let y = g.reshape(v[0], &[2, 6])?;
        probe(g, y, 3)
    });
    assert_grad("concat_cols", &[a.clone(), b], |g, v| {
        let y = g.concat_cols(&[v[0], v[1], v[0]])?;
        probe(g, y, 4)
    });
    assert_grad("concat_rows", &[a.clone(), c], |g, v| {
        let y = g.concat_rows(&[v[0], v[1]])?;
        probe(g, y, 5)
    });
    assert_grad("slice_cols", &[a.clone()], |g, v| {
        let y = g.slice_cols(v[0], 1, 2)?;
        probe(g, y, 6)
    });
    assert_grad("slice_rows", &[a.clone()], |g, v| {
        let y = g.slice_rows(v[0], 1, 2)?;
        probe(g, y, 7)
    });
    assert_grad("gather_rows", &[a.clone()], |g, v| {
        let y = g.gather_rows(v[0], &[2, 0, 2, 1])?;
        probe(g, y, 8)
    });
}

#[test]
fn softmax_and_logsumexp_gradients() {
    let mut rng = Rng::new(13);
    let a = random(&[4, 4], &mut rng);
    assert_grad("softmax_rows", &[a.clone()], |g, v| {
        let y = g.softmax_rows(v[0])?;
        probe(g, y, 1)
    });
    assert_grad("logsumexp", &[a.clone()], |g, v| {
        let y = g.logsumexp_rows(v[0], false)?;
        probe(g, y, 2)
    });
    assert_grad("logsumexp off-diagonal", &[a.clone()], |g, v| {
        let y = g.logsumexp_rows(v[0], true)?;
        probe(g, y, 3)
    });

    let mut g = Graph::<f64>::new();
    let x = g.input(a);
    let s = g.softmax_rows(x).unwrap();
    for row in g.value(s).data().chunks(4) {
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
    }
}

#[test]
fn loss_gradients_and_values() {
    let mut rng = Rng::new(14);
    let a = random(&[3, 4], &mut rng);
    let b = random(&[3, 4], &mut rng);
    assert_grad("l1", &[a.clone(), b.clone()], |g, v| g.l1_loss(v[0], v[1]));
    assert_grad("mse", &[a.clone(), b.clone()], |g, v| g.mse_loss(v[0], v[1]));
    assert_grad("cross_entropy", &[a.clone()], |g, v| g.cross_entropy(v[0], &[3, 0, 1]));

    let mut g = Graph::<f64>::new();
    let x = g.input(a.clone());
    let l1 = g.l1_loss(x, x).unwrap();
    assert_eq!(g.value(l1).item(), 0.0);
    let z = g.input(Tensor::new(&[2], vec![0.0, 0.0]).unwrap());
    let o = g.input(Tensor::new(&[2], vec![1.0, 1.0]).unwrap());
    let mse = g.mse_loss(z, o).unwrap();
    assert_eq!(g.value(mse).item(), 1.0);
    let uniform = g.input(Tensor::zeros(&[1, 4]));
    let ce = g.cross_entropy(uniform, &[2]).unwrap();
    assert!((g.value(ce).item() - 4f64.ln()).abs() < 1e-12);
}

#[test]
fn convolution_gradients() {
    let mut rng = Rng::new(15);
    for (len, k, stride, dilation, padding) in [(8, 3, 1, 1, 1), (8, 3, 1, 3, 3), (8, 3, 1, 5, 5), (8, 4, 2, 1, 1)] {
        let x = random(&[2, len], &mut rng);
        let w = random(&[3, 2, k], &mut rng);
        assert_grad("conv1d", &[x.clone(), w], |g, v| {
            let y = g.conv1d(v[0], v[1], stride, dilation, padding)?;
            probe(g, y, 1)
        });
        let wt = random(&[2, 3, k], &mut rng);
        assert_grad("conv_transpose1d", &[x, wt], |g, v| {
            let y = g.conv_transpose1d(v[0], v[1], stride, dilation, padding)?;
            probe(g, y, 2)
        });
    }
}

#[test]
fn lstm_zero_weights_give_zero_hidden() {
    let mut g = Graph::<f64>::new();
    let x = g.input(Tensor::new(&[1, 3], vec![0.3, -1.0, 2.0]).unwrap());
    let h = g.input(Tensor::zeros(&[1, 2]));
    let c = g.input(Tensor::zeros(&[1, 2]));
    let wx = g.input(Tensor::zeros(&[3, 8]));
    let wh = g.input(Tensor::zeros(&[2, 8]));
    let b = g.input(Tensor::zeros(&[8]));
    let (h1, c1) = lstm_step(&mut g, x, h, c, wx, wh, b).unwrap();
    assert!(g.value(h1).data().iter().all(|&v| v == 0.0));
    assert!(g.value(c1).data().iter().all(|&v| v == 0.0));
    let bad = g.input(Tensor::zeros(&[1, 3]));
    assert!(lstm_step(&mut g, x, bad, c, wx, wh, b).is_err());
}

fn lstm_unrolled(steps: usize) {
    let mut rng = Rng::new(16 + steps as u64);
    let (batch, input, hidden) = (2, 3, 4);
    let xs = random(&[steps * batch, input], &mut rng);
    let wx = random(&[input, 4 * hidden], &mut rng).map(|v| v * 0.5);
    let wh = random(&[hidden, 4 * hidden], &mut rng).map(|v| v * 0.5);
    let b = random(&[4 * hidden], &mut rng);
    let h0 = random(&[batch, hidden], &mut rng);
    let c0 = random(&[batch, hidden], &mut rng);
    assert_grad("lstm", &[xs, wx, wh, b, h0, c0], |g, v| {
        let (mut h, mut c) = (v[4], v[5]);
        let mut outs = Vec::new();
        for t in 0..steps {
            let x = g.slice_rows(v[0], t * batch, batch)?;
            (h, c) = lstm_step(g, x, h, c, v[1], v[2], v[3])?;
            outs.push(h);
        }
        let all = g.concat_rows(&outs)?;
        let y = g.concat_cols(&[all])?;
        let last = probe(g, c, 7)?;
        let hs = probe(g, y, 8)?;
        g.add(last, hs)
    });
}

#[test]
fn lstm_single_step_gradient() {
    lstm_unrolled(1);
}

#[test]
fn lstm_ten_step_gradient() {
    lstm_unrolled(10);
}

#[test]
fn attention_examples() {
    let mut rng = Rng::new(17);
    let mut g = Graph::<f64>::new();
    let q = g.input(random(&[5, 3], &mut rng));
    let k1 = g.input(random(&[1, 3], &mut rng));
    let v1 = g.input(random(&[1, 3], &mut rng));
    let out = scaled_dot_attention(&mut g, q, k1, v1).unwrap();
    let v = g.value(v1).data().to_vec();
    for row in g.value(out).data().chunks(3) {
        for (a, b) in row.iter().zip(&v) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    let key = random(&[1, 3], &mut rng);
    let same = Tensor::new(&[4, 3], key.data().repeat(4)).unwrap();
    let ks = g.input(same);
    let vals = random(&[4, 3], &mut rng);
    let mean: Vec<f64> = (0..3).map(|j| (0..4).map(|i| vals.data()[i * 3 + j]).sum::<f64>() / 4.0).collect();
    let vs = g.input(vals);
    let out = scaled_dot_attention(&mut g, q, ks, vs).unwrap();
    for row in g.value(out).data().chunks(3) {
        for (a, b) in row.iter().zip(&mean) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    // one-dimensional values: outputs stay in the hull of the values
    let k = g.input(random(&[6, 3], &mut rng));
    let v1d = random(&[6, 1], &mut rng);
    let (lo, hi) = v1d.data().iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &x| (l.min(x), h.max(x)));
    let vv = g.input(v1d);
    let out = scaled_dot_attention(&mut g, q, k, vv).unwrap();
    assert!(g.value(out).data().iter().all(|&x| x >= lo - 1e-12 && x <= hi + 1e-12));

    let bad = g.input(random(&[6, 2], &mut rng));
    assert!(scaled_dot_attention(&mut g, q, bad, vv).is_err());
}

#[test]
fn attention_gradient() {
    let mut rng = Rng::new(18);
    let q = random(&[3, 4], &mut rng);
    let k = random(&[5, 4], &mut rng);
    let v = random(&[5, 4], &mut rng);
    assert_grad("attention", &[q, k, v], |g, x| {
        let y = scaled_dot_attention(g, x[0], x[1], x[2])?;
        probe(g, y, 1)
    });
}

#[test]
fn layer_parameter_gradients() {
    let mut rng = Rng::new(19);
    let mut store = ParamStore::<f64>::new();
    let down = DownBlock::new(&mut store, "down", 2, 3, &mut rng);
    let up = UpBlock::new(&mut store, "up", 3, 2, &mut rng);
    let attn = CrossAttention::new(&mut store, "attn", 3, 4, &mut rng);
    let cell = LstmCell::new(&mut store, "cell", 2, 3, &mut rng);
    let conv = Conv1d::new(&mut store, "conv", 2, 2, 1, 1, 1, 0, &mut rng);
    // biases start at zero; give them values so their gradients are exercised too
    for p in store.iter_mut() {
        for v in p.value.data_mut() {
            *v += 0.1 * rng.normal();
        }
    }
    let x = random(&[2, 8], &mut rng);
    let ctx = random(&[4, 2], &mut rng);
    let err = check_params(
        &store,
        |g| {
            let xv = g.input(x.clone());
            let cv = g.input(ctx.clone());
            let d = down.forward(g, xv)?;
            let d = attn.forward(g, d, cv)?;
            let u = up.forward(g, d)?;
            let u = conv.forward(g, u)?;
            let rows = g.transpose(u)?;
            let h = g.input(Tensor::zeros(&[8, 3]));
            let (h, _) = cell.step(g, rows, h, h)?;
            let a = probe(g, u, 1)?;
            let b = probe(g, h, 2)?;
            g.add(a, b)
        },
        None,
    )
    .unwrap();
    assert!(err < TOL, "layers: relative error {err:e}");
}

#[test]
fn forward_is_deterministic() {
    let run = || {
        let mut rng = Rng::new(20);
        let mut store = ParamStore::<f32>::new();
        let down = DownBlock::new(&mut store, "down", 3, 4, &mut rng);
        let x = Tensor::<f32>::from_f64(&[3, 16], &(0..48).map(|i| (i as f64 * 0.37).sin()).collect::<Vec<_>>()).unwrap();
        let mut g = Graph::with_params(&store);
        let xv = g.input(x);
        let y = down.forward(&mut g, xv).unwrap();
        g.value(y).data().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
    };
    assert_eq!(run(), run());
}
