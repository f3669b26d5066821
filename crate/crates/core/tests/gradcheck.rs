//! Reverse-mode gradients of random networks against central finite differences.

use kdm_core::ndmath::{Matrix, Mlp, Parameters, Rng};

fn check(widths: &[usize], embed: usize, seed: u64) {
    let mut rng = Rng::new(seed);
    let mut net = Mlp::new(widths, embed, &mut rng);
    let x = Matrix::from_fn(4, widths[0] + embed, |_, _| rng.normal());
    let w = Matrix::from_fn(4, *widths.last().unwrap(), |_, _| rng.normal());
    let loss = |net: &Mlp| -> f64 {
        let out = net.forward_batch(&x).unwrap();
        out.data().iter().zip(w.data()).map(|(a, b)| a * b).sum()
    };
    let tape = net.forward_tape(&x).unwrap();
    let mut grads = net.zeros_like();
    let dx = net.backward(&tape, &w, &mut grads).unwrap();
    let analytic = grads.flatten();

    let h = 1e-5;
    let close = |a: f64, n: f64| (a - n).abs() <= 1e-7 || (a - n).abs() <= 1e-4 * a.abs().max(n.abs());
    let mut idx = 0;
    for p in 0..net.params().len() {
        for j in 0..net.params()[p].len() {
            let orig = net.params()[p][j];
            net.params_mut()[p][j] = orig + h;
            let up = loss(&net);
            net.params_mut()[p][j] = orig - h;
            let down = loss(&net);
            net.params_mut()[p][j] = orig;
            let numeric = (up - down) / (2.0 * h);
            assert!(close(analytic[idx], numeric), "{widths:?} param {idx}: {} vs {numeric}", analytic[idx]);
            idx += 1;
        }
    }

    // Input gradient too.
    for i in 0..x.rows() {
        for j in 0..x.cols() {
            let mut xp = x.clone();
            xp.set(i, j, x.get(i, j) + h);
            let mut xm = x.clone();
            xm.set(i, j, x.get(i, j) - h);
            let f = |m: &Matrix| -> f64 {
                net.forward_batch(m).unwrap().data().iter().zip(w.data()).map(|(a, b)| a * b).sum()
            };
            let numeric = (f(&xp) - f(&xm)) / (2.0 * h);
            assert!(close(dx.get(i, j), numeric), "input ({i},{j}): {} vs {numeric}", dx.get(i, j));
        }
    }
}

#[test]
fn random_networks_up_to_three_hidden_layers() {
    let mut rng = Rng::new(9);
    for case in 0..9 {
        let mut widths = vec![1 + rng.below(4)];
        for _ in 0..1 + case % 3 {
            widths.push(1 + rng.below(64));
        }
        widths.push(1 + rng.below(3));
        check(&widths, rng.below(3), case as u64);
    }
}

#[test]
fn widest_allowed_network() {
    check(&[2, 64, 64, 64, 2], 16, 77);
}
