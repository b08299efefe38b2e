//! Shared fixtures for the criterion benchmarks.

use sentcls_core::{ArchKind, ArchSpec, Input, Rng, SeqInput, Tensor};

/// Tensor of the given shape with entries drawn from U(-1, 1).
pub fn random_tensor(shape: &[usize], rng: &mut Rng) -> Tensor {
    let len = shape.iter().product();
    Tensor::new(shape, (0..len).map(|_| rng.uniform(-1.0, 1.0)).collect()).expect("shape matches data")
}

/// Default-sized model over `dim`-wide inputs with six classes.
pub fn bench_spec(arch: ArchKind, dim: usize) -> ArchSpec {
    match arch {
        ArchKind::Fnn => ArchSpec::Fnn {
            input: dim,
            hidden: vec![256],
            classes: 6,
        },
        ArchKind::Cnn => ArchSpec::Cnn {
            embed_dim: dim,
            window: 3,
            filters: 256,
            hidden: 128,
            classes: 6,
            dropout: 0.1,
        },
        ArchKind::Rnn => ArchSpec::Rnn {
            embed_dim: dim,
            hidden: 256,
            classes: 6,
            dropout: 0.1,
        },
        ArchKind::Lstm => ArchSpec::Lstm {
            embed_dim: dim,
            hidden: 256,
            classes: 6,
            dropout: 0.1,
        },
    }
}

/// A random input for `arch`: a dense vector for the FNN, otherwise a
/// `len x dim` sequence.
pub fn bench_input(arch: ArchKind, dim: usize, len: usize, rng: &mut Rng) -> Input {
    match arch {
        ArchKind::Fnn => Input::Vector(random_tensor(&[dim], rng)),
        _ => Input::Sequence(SeqInput::Dense(random_tensor(&[len, dim], rng))),
    }
}
