//! Reverse-mode gradients on the tape, checked against central differences.

use relmoss::tensor::{Reduction, Rng, Tape, Tensor};

fn loss(w: &Tensor, x: &Tensor, y: &Tensor) -> (f64, Tensor) {
    let mut tape = Tape::new();
    let wv = tape.leaf(w.clone(), true);
    let xv = tape.constant(x.clone());
    let h = tape.matmul(xv, wv).unwrap();
    let h = tape.relu(h);
    let logit = tape.row_sum(h);
    let l = tape.bce_with_logits(logit, y, Reduction::Mean).unwrap();
    tape.backward(l).unwrap();
    (tape.value(l).item(), tape.grad(wv).unwrap().clone())
}

fn main() {
    let mut rng = Rng::new(1);
    let x = Tensor::from_vec(6, 3, (0..18).map(|_| rng.normal()).collect()).unwrap();
    let y = Tensor::column(vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
    let w = Tensor::glorot(3, 4, &mut rng);
    let (l, grad) = loss(&w, &x, &y);
    println!("loss {l:.6}");
    let eps = 1e-6;
    let mut worst: f64 = 0.0;
    for i in 0..w.len() {
        let mut p = w.clone();
        p.data_mut()[i] += eps;
        let mut m = w.clone();
        m.data_mut()[i] -= eps;
        let fd = (loss(&p, &x, &y).0 - loss(&m, &x, &y).0) / (2.0 * eps);
        worst = worst.max((fd - grad.data()[i]).abs());
        println!("dL/dw[{i:>2}] tape {:+.8}  fd {:+.8}", grad.data()[i], fd);
    }
    println!("max abs difference {worst:.2e}");
}
