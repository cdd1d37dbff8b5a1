use pdl_core::mlp::{self, Activation, MlpConfig};
use pdl_core::tape::Tape;
use pdl_core::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_tensor(shape: &[usize], rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> Tensor {
    let len: usize = shape.iter().product();
    let data: Vec<f64> = (0..len).map(|_| rng.random_range(lo..hi)).collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

#[test]
fn dbg() {
    let mut rng = ChaCha8Rng::seed_from_u64(2027);
    let seed = rng.random_range(0..u64::MAX / 2);
    let cfg = MlpConfig { input_dim: 5, hidden_dims: vec![6], embedding_dim: 4, activation: Activation::Relu, seed };
    let params = mlp::init_params(&cfg).unwrap();
    let x = loop {
        let x = random_tensor(&[4, 5], &mut rng, -1.0, 1.0);
        let w0 = &params.layers()[0].weight;
        let mut near = false;
        for r in 0..4 { for c in 0..w0.cols() {
            let p: f64 = (0..5).map(|k| x.at(r, k) * w0.at(k, c)).sum();
            if p.abs() < 1e-3 { near = true; }
        }}
        if !near { break x; }
    };
    let mut inputs: Vec<Tensor> = params.tensors().into_iter().cloned().collect();
    inputs.push(x);

    let eval = |inp: &[Tensor]| -> f64 {
        let mut tape = Tape::new();
        let vars: Vec<_> = inp.iter().map(|t| tape.leaf(t.clone(), false)).collect();
        let mv = mlp::vars_from_slice(&vars[..4], Activation::Relu);
        let z = mlp::embed(&mut tape, &mv, vars[4]).unwrap();
        let s = tape.sum(z).unwrap();
        tape.value(s).item()
    };
    // analytic
    let mut tape = Tape::new();
    let vars: Vec<_> = inputs.iter().map(|t| tape.leaf(t.clone(), true)).collect();
    let mv = mlp::vars_from_slice(&vars[..4], Activation::Relu);
    let z = mlp::embed(&mut tape, &mv, vars[4]).unwrap();
    let s = tape.sum(z).unwrap();
    let grads = tape.backward(s).unwrap();
    let analytic: Vec<Tensor> = vars.iter().map(|&v| grads.wrt(v).unwrap().clone()).collect();

    let h = 1e-5;
    let names = ["w0","b0","w1","b1","x"];
    let mut work = inputs.clone();
    for which in 0..inputs.len() {
        for i in 0..inputs[which].len() {
            let orig = inputs[which].data()[i];
            work[which].data_mut()[i] = orig + h;
            let plus = eval(&work);
            work[which].data_mut()[i] = orig - h;
            let minus = eval(&work);
            work[which].data_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            let a = analytic[which].data()[i];
            let denom = a.abs().max(numeric.abs()).max(1e-8);
            let rel = (a - numeric).abs() / denom;
            if rel > 1e-5 {
                println!("{}[{}]: analytic {a:.6e} numeric {numeric:.6e} rel {rel:.3e}", names[which], i);
            }
        }
    }
}

#[test]
fn dbg2() {
    let mut rng = ChaCha8Rng::seed_from_u64(2027);
    let seed = rng.random_range(0..u64::MAX / 2);
    let cfg = MlpConfig { input_dim: 5, hidden_dims: vec![6], embedding_dim: 4, activation: Activation::Relu, seed };
    let params = mlp::init_params(&cfg).unwrap();
    let x = loop {
        let x = random_tensor(&[4, 5], &mut rng, -1.0, 1.0);
        let w0 = &params.layers()[0].weight;
        let mut near = false;
        for r in 0..4 { for c in 0..w0.cols() {
            let p: f64 = (0..5).map(|k| x.at(r, k) * w0.at(k, c)).sum();
            if p.abs() < 1e-3 { near = true; }
        }}
        if !near { break x; }
    };
    let w0 = &params.layers()[0].weight;
    for r in 0..4 {
        let pre: Vec<f64> = (0..6).map(|c| (0..5).map(|k| x.at(r, k) * w0.at(k, c)).sum()).collect();
        println!("row {r} preacts {pre:?}");
    }
    // analytic grad wrt x
    let mut tape = Tape::new();
    let inputs: Vec<Tensor> = params.tensors().into_iter().cloned().collect();
    let mut vars: Vec<_> = inputs.iter().map(|t| tape.leaf(t.clone(), true)).collect();
    let xv = tape.leaf(x.clone(), true);
    vars.push(xv);
    let mv = mlp::vars_from_slice(&vars[..4], Activation::Relu);
    let z = mlp::embed(&mut tape, &mv, vars[4]).unwrap();
    println!("z row2 {:?}", tape.value(z).row(2));
    let s = tape.sum(z).unwrap();
    let grads = tape.backward(s).unwrap();
    println!("dx {:?}", grads.wrt(xv).unwrap().data());
}
