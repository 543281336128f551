//! Compare tape gradients of a small attention block against central
//! differences.

use intentdrive::diffcore::{Attention, ParamStore, Tape, Tensor};
use intentdrive::gradcheck::{numeric_gradient, relative_error};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> intentdrive::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut store = ParamStore::new();
    let attn = Attention::new(&mut store, "attn", 8, 8, 2, &mut rng)?;
    let tokens = Tensor::from_fn(vec![5, 8], |_| rng.gen_range(-1.0..1.0));

    let loss = |store: &ParamStore, tape: &mut Tape| {
        let x = tape.constant(tokens.clone());
        let y = attn.self_attention(tape, store, x).unwrap();
        let sq = tape.mul(y, y).unwrap();
        tape.sum(sq)
    };

    let mut tape = Tape::new();
    let l = loss(&store, &mut tape);
    let grads = tape.backward(l)?.param_grads(&tape, &store);
    for (id, p) in store.iter() {
        let numeric = numeric_gradient(
            |probe| {
                let mut s = store.clone();
                *s.value_mut(id) = probe.clone();
                let mut t = Tape::no_grad();
                let l = loss(&s, &mut t);
                t.value(l).item()
            },
            &p.value,
            1e-5,
        );
        let analytic = grads.get(id).expect("every parameter is used");
        println!("{:<16} rel err {:.2e}", p.name, relative_error(analytic.data(), numeric.data(), 1e-6));
    }
    Ok(())
}
