//! Reverse-mode gradients on the tape, checked against a central difference.
//!
//! cargo run --release --example autodiff_tape

use cestfit::neural::{Tape, Tensor};

fn loss(x: &Tensor, w: &Tensor, b: &Tensor, target: &Tensor) -> (f64, Vec<Tensor>) {
    let mut tape = Tape::new();
    let (xv, wv, bv) = (tape.leaf(x.clone()), tape.leaf(w.clone()), tape.leaf(b.clone()));
    let h = tape.linear(xv, wv, bv);
    let h = tape.gelu(h);
    let y = tape.layer_norm(h, bv, bv);
    let l = tape.mse(y, target.clone());
    let value = tape.value(l).data[0];
    let grads = tape.backward(l);
    let get = |v| grads.get(v).cloned().unwrap();
    (value, vec![get(xv), get(wv), get(bv)])
}

fn main() {
    let x = Tensor::from_vec(2, 3, vec![0.3, -1.2, 0.8, 1.5, 0.1, -0.4]);
    let w = Tensor::from_vec(3, 4, (0..12).map(|i| ((i * 7 % 11) as f64 - 5.0) / 10.0).collect());
    let b = Tensor::from_vec(1, 4, vec![0.5, 1.0, -0.5, 0.2]);
    let target = Tensor::from_vec(2, 4, vec![0.0, 1.0, -1.0, 0.5, 0.2, -0.3, 0.7, -0.9]);

    let (value, grads) = loss(&x, &w, &b, &target);
    println!("loss {value:.6}");

    let h = 1e-6;
    for (j, name) in ["w[0][0]", "w[1][2]", "w[2][3]"].iter().enumerate() {
        let idx = [0, 6, 11][j];
        let (mut up, mut down) = (w.clone(), w.clone());
        up.data[idx] += h;
        down.data[idx] -= h;
        let fd = (loss(&x, &up, &b, &target).0 - loss(&x, &down, &b, &target).0) / (2.0 * h);
        println!("d loss / d {name}: tape {:+.8}  central difference {fd:+.8}", grads[1].data[idx]);
    }
    println!("d loss / d b (used as bias, gain and shift): {:?}", grads[2].data);
}
