use super::*;
use crate::numerics::{grad_check, AdamConfig, AdamState};
use rand::SeedableRng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    Matrix::from_vec(
        rows,
        cols,
        (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    )
    .unwrap()
}

fn randomized(config: &MatchNetConfig, seed: u64) -> MatchNetParams {
    let mut r = rng(seed);
    let mut p = MatchNetParams::init(config, &mut r);
    for t in p.tensors_mut() {
        for x in t.as_mut_slice() {
            *x = r.gen_range(-0.9..0.9);
        }
    }
    p
}

fn multi_hot(rows: usize, labels: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let mut y = Matrix::zeros(rows, labels);
    for r in 0..rows {
        y.set(r, rng.gen_range(0..labels), 1.0);
        if rng.gen_bool(0.4) {
            y.set(r, rng.gen_range(0..labels), 1.0);
        }
    }
    y
}

fn support(m: usize, d: usize, labels: usize, seed: u64) -> SupportSet {
    let mut r = rng(seed);
    SupportSet::new(random_matrix(m, d, &mut r), multi_hot(m, labels, &mut r)).unwrap()
}

// ---- straight-line oracle -------------------------------------------------

fn layer(w: &Matrix, b: &Matrix, x: &[f64]) -> Vec<f64> {
    (0..w.rows())
        .map(|i| ((0..w.cols()).map(|j| w.get(i, j) * x[j]).sum::<f64>() + b.as_slice()[i]).tanh())
        .collect()
}

fn cos(a: &[f64], b: &[f64]) -> f64 {
    let d: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    d / (na * nb)
}

fn oracle_match(p: &MatchNetParams, s: &SupportSet, x_hat: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let g = p.g.as_ref().unwrap_or(&p.f);
    let fx = layer(&p.f.weight, p.f.bias.as_ref().unwrap(), x_hat);
    let e: Vec<f64> = (0..s.len())
        .map(|i| cos(&fx, &layer(&g.weight, g.bias.as_ref().unwrap(), s.x.row(i))).exp())
        .collect();
    let z: f64 = e.iter().sum();
    let a: Vec<f64> = e.iter().map(|v| v / z).collect();
    let y = (0..s.n_labels())
        .map(|l| (0..s.len()).map(|i| a[i] * s.y.get(i, l)).sum())
        .collect();
    (y, a)
}

// ---- forward ---------------------------------------------------------------

#[test]
fn singleton_support_copies_its_label() {
    let cfg = MatchNetConfig {
        hidden: 5,
        ..MatchNetConfig::new(4)
    };
    let p = randomized(&cfg, 1);
    let s = support(1, 4, 3, 2);
    let out = matchnet_forward(&p, &s, &[0.1, 0.2, 0.3, 0.4]).unwrap();
    assert_eq!(out.attention, vec![1.0]);
    assert_eq!(out.y_hat, s.y.row(0).to_vec());
}

#[test]
fn one_hot_supports_give_distributions() {
    let cfg = MatchNetConfig {
        hidden: 5,
        shared: false,
        ..MatchNetConfig::new(4)
    };
    let p = randomized(&cfg, 3);
    let mut r = rng(4);
    let mut y = Matrix::zeros(4, 3);
    for i in 0..4 {
        y.set(i, i % 3, 1.0);
    }
    let s = SupportSet::new(random_matrix(4, 4, &mut r), y).unwrap();
    let out = matchnet_forward(&p, &s, &[1.0, -1.0, 0.5, 0.0]).unwrap();
    assert!((out.y_hat.iter().sum::<f64>() - 1.0).abs() < 1e-12);
}

#[test]
fn identical_support_rows_average_labels() {
    let cfg = MatchNetConfig {
        hidden: 4,
        ..MatchNetConfig::new(3)
    };
    let p = randomized(&cfg, 5);
    let x = Matrix::from_rows(&[[0.2, 0.4, -0.1]; 3], 3).unwrap();
    let y = Matrix::from_vec(3, 3, vec![1., 0., 0., 0., 1., 1., 1., 0., 1.]).unwrap();
    let s = SupportSet::new(x, y).unwrap();
    let out = matchnet_forward(&p, &s, &[0.5, 0.5, 0.5]).unwrap();
    let want = [2.0 / 3.0, 1.0 / 3.0, 2.0 / 3.0];
    for (a, b) in out.y_hat.iter().zip(want) {
        assert!((a - b).abs() < 1e-15);
    }
}

#[test]
fn forward_matches_straight_line_oracle() {
    for shared in [true, false] {
        let cfg = MatchNetConfig {
            hidden: 5,
            shared,
            ..MatchNetConfig::new(4)
        };
        let p = randomized(&cfg, 6);
        let s = support(3, 4, 4, 7);
        let q = [0.3, -0.6, 0.9, 0.1];
        let out = matchnet_forward(&p, &s, &q).unwrap();
        let (y, a) = oracle_match(&p, &s, &q);
        for (u, v) in out.y_hat.iter().zip(&y).chain(out.attention.iter().zip(&a)) {
            assert!((u - v).abs() < 1e-12);
        }
    }
}

#[test]
fn one_hop_hybrid_is_the_matching_network() {
    let cfg = MatchNetConfig {
        hidden: 6,
        hops: 1,
        shared: false,
        ..MatchNetConfig::new(4)
    };
    let p = randomized(&cfg, 8);
    let s = support(4, 4, 5, 9);
    let q = [0.7, 0.1, -0.2, 0.4];
    let (y, diag) = hybrid_forward(&p, &s, &q).unwrap();
    let plain = matchnet_forward(&p, &s, &q).unwrap();
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&y), bits(&plain.y_hat));
    assert_eq!(bits(&diag.attention), bits(&plain.attention));
}

#[test]
fn two_hop_hybrid_matches_oracle() {
    let cfg = MatchNetConfig {
        hidden: 5,
        hops: 2,
        shared: false,
        ..MatchNetConfig::new(3)
    };
    let mut p = randomized(&cfg, 10);
    // Zero prefix: u = tanh(0) = 0, m_i = c_i = 0, so the augmented query
    // is zero plus the uniform readout of zero memory forms.
    let hop = &mut p.prefix[0];
    for proj in [&mut hop.a, hop.b.as_mut().unwrap(), &mut hop.c] {
        proj.weight.fill(0.0);
        proj.bias.as_mut().unwrap().fill(0.0);
    }
    let s = support(3, 3, 4, 11);
    let q = [0.5, -0.5, 0.25];
    let (y, diag) = hybrid_forward(&p, &s, &q).unwrap();
    assert_eq!(diag.augmented_query, vec![0.0; 3]);
    assert_eq!(diag.prefix_attention[0], vec![1.0 / 3.0; 3]);
    // f(0) = tanh(b_F), independent of the query.
    let (want, _) = oracle_match(&p, &s, &[0.0; 3]);
    for (a, b) in y.iter().zip(&want) {
        assert!((a - b).abs() < 1e-12);
    }

    // General two-hop instance against a hand-rolled prefix.
    let p = randomized(&cfg, 12);
    let (y, diag) = hybrid_forward(&p, &s, &q).unwrap();
    let hop = &p.prefix[0];
    let b = hop.b.as_ref().unwrap();
    let u = layer(&b.weight, b.bias.as_ref().unwrap(), &q);
    let ms: Vec<Vec<f64>> = (0..3)
        .map(|i| layer(&hop.a.weight, hop.a.bias.as_ref().unwrap(), s.x.row(i)))
        .collect();
    let cs: Vec<Vec<f64>> = (0..3)
        .map(|i| layer(&hop.c.weight, hop.c.bias.as_ref().unwrap(), s.x.row(i)))
        .collect();
    let e: Vec<f64> = ms
        .iter()
        .map(|m| m.iter().zip(&u).map(|(a, b)| a * b).sum::<f64>().exp())
        .collect();
    let z: f64 = e.iter().sum();
    let mut aug = u.clone();
    for i in 0..3 {
        for j in 0..3 {
            aug[j] += e[i] / z * cs[i][j];
        }
    }
    for (a, b) in diag.augmented_query.iter().zip(&aug) {
        assert!((a - b).abs() < 1e-12);
    }
    let (want, _) = oracle_match(&p, &s, &aug);
    for (a, b) in y.iter().zip(&want) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn permuting_support_leaves_output() {
    let cfg = MatchNetConfig {
        hidden: 5,
        hops: 3,
        ..MatchNetConfig::new(4)
    };
    let p = randomized(&cfg, 13);
    let s = support(4, 4, 3, 14);
    let perm = [3, 1, 0, 2];
    let xs: Vec<Vec<f64>> = perm.iter().map(|&i| s.x.row(i).to_vec()).collect();
    let ys: Vec<Vec<f64>> = perm.iter().map(|&i| s.y.row(i).to_vec()).collect();
    let sp = SupportSet::new(
        Matrix::from_rows(&xs, 4).unwrap(),
        Matrix::from_rows(&ys, 3).unwrap(),
    )
    .unwrap();
    let q = [0.1, 0.2, 0.3, -0.4];
    let (a, _) = hybrid_forward(&p, &s, &q).unwrap();
    let (b, _) = hybrid_forward(&p, &sp, &q).unwrap();
    for (u, v) in a.iter().zip(&b) {
        assert!((u - v).abs() < 1e-12);
    }
}

#[test]
fn attention_is_scale_invariant_in_query_embedding() {
    let cfg = MatchNetConfig {
        hidden: 5,
        ..MatchNetConfig::new(3)
    };
    let p = randomized(&cfg, 15);
    let s = support(4, 3, 3, 16);
    let fx = p.embed_query(&[0.3, 0.1, -0.8]);
    let gx = p.support_projection().apply_rows(&s.x, true);
    let base = read_out(&gx, &s.y, &fx);
    for scale in [0.01, 2.5, 1e3] {
        let scaled: Vec<f64> = fx.iter().map(|v| v * scale).collect();
        let out = read_out(&gx, &s.y, &scaled);
        for (a, b) in base.attention.iter().zip(&out.attention) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn errors_on_bad_inputs() {
    let cfg = MatchNetConfig {
        hidden: 3,
        ..MatchNetConfig::new(3)
    };
    let p = randomized(&cfg, 17);
    assert!(SupportSet::new(Matrix::zeros(0, 3), Matrix::zeros(0, 2)).is_err());
    assert!(SupportSet::new(Matrix::zeros(2, 3), Matrix::zeros(1, 2)).is_err());
    let s = support(2, 4, 2, 18);
    assert!(matchnet_forward(&p, &s, &[0.0; 3]).is_err());
    let s = support(2, 3, 2, 18);
    assert!(matchnet_forward(&p, &s, &[0.0; 4]).is_err());
}

// ---- gradients -------------------------------------------------------------

fn episode(cfg: &MatchNetConfig, m: usize, labels: usize, seed: u64) -> Episode {
    let mut r = rng(seed);
    let s = support(m, cfg.dim, labels, seed + 1);
    let queries = random_matrix(3, cfg.dim, &mut r);
    let targets = multi_hot(3, labels, &mut r);
    Episode::new(s, (0..m).collect(), queries, targets, (m..m + 3).collect()).unwrap()
}

fn check(cfg: MatchNetConfig, m: usize, seed: u64) -> f64 {
    let p = randomized(&cfg, seed);
    let ep = episode(&cfg, m, 4, seed + 10);
    let (_, grads) = matchnet_grads(&p, &ep).unwrap();
    grad_check(|p| matchnet_grads(p, &ep).unwrap().0, &p, &grads, 1e-5)
}

#[test]
fn gradients_plain() {
    let cfg = MatchNetConfig {
        hidden: 4,
        hops: 1,
        shared: false,
        ..MatchNetConfig::new(3)
    };
    let err = check(cfg, 3, 20);
    assert!(err < 1e-5, "{err}");
}

#[test]
fn gradients_shared_hybrid() {
    let cfg = MatchNetConfig {
        hidden: 4,
        hops: 3,
        shared: true,
        ..MatchNetConfig::new(3)
    };
    let err = check(cfg, 3, 21);
    assert!(err < 1e-5, "{err}");
}

#[test]
fn matching_targets_give_zero_loss() {
    let cfg = MatchNetConfig {
        hidden: 4,
        hops: 2,
        ..MatchNetConfig::new(3)
    };
    let p = randomized(&cfg, 22);
    let mut ep = episode(&cfg, 3, 4, 23);
    let rows: Vec<Vec<f64>> = ep
        .queries
        .row_iter()
        .map(|q| hybrid_forward(&p, &ep.support, q).unwrap().0)
        .collect();
    ep.targets = Matrix::from_rows(&rows, 4).unwrap();
    assert_eq!(matchnet_grads(&p, &ep).unwrap().0, 0.0);
}

#[test]
fn episode_rejects_overlap() {
    let s = support(2, 3, 2, 24);
    let q = Matrix::zeros(1, 3);
    let mut t = Matrix::zeros(1, 2);
    t.set(0, 0, 1.0);
    assert!(Episode::new(s, vec![0, 1], q, t, vec![1]).is_err());
}

#[test]
fn tied_embeddings_stay_tied() {
    let cfg = MatchNetConfig {
        hidden: 4,
        hops: 2,
        shared: true,
        ..MatchNetConfig::new(3)
    };
    let mut p = randomized(&cfg, 25);
    let mut state = AdamState::new(AdamConfig::default(), &p);
    for i in 0..10 {
        let ep = episode(&cfg, 3, 4, 30 + i);
        let (_, g) = matchnet_grads(&p, &ep).unwrap();
        state.step(&mut p, &g).unwrap();
        let v = [0.3, -0.2, 0.7];
        assert_eq!(p.embed_query(&v), p.embed_support(&v));
    }
    assert!(p.g.is_none() && p.prefix.iter().all(HopParams::is_shared));
}
