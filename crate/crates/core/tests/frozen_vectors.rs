//! Pinned outputs of the noise generator. Any change here changes the sample
//! paths behind every stored result.

use ppsde_core::noise::CounterNormals;
use ppsde_core::{integrate, BrownianLattice, Preset, SchemeConfig, SchemeKind};

fn close(a: f64, b: f64, rtol: f64) -> bool {
    (a - b).abs() <= rtol * b.abs()
}

#[test]
fn counter_normals_seed_42() {
    let normals = CounterNormals::new(42);
    let expected = [
        ((0, 0), 0.4730077985480549),
        ((0, 1), 1.6475298562196279),
        ((0, 2), -0.18270077744842778),
        ((1, 0), 0.5733367677565503),
        ((7, 1000), -0.3928462220936961),
    ];
    for ((path, step), value) in expected {
        let got = normals.draw(path, step);
        assert!(
            close(got, value, 1e-15),
            "({path}, {step}): {got} != {value}"
        );
    }
}

#[test]
fn lattice_seed_42_path_3() {
    let lattice = BrownianLattice::generate(42, 3, 1.0, 4).unwrap();
    let expected = [
        -0.08848533876357058,
        0.05844151336944283,
        0.15327909188382688,
        -8.295827919659694e-5,
    ];
    for (got, want) in lattice.increments().iter().zip(expected) {
        assert!(close(*got, want, 1e-15), "{got} != {want}");
    }

    let path = integrate(
        &Preset::Eg1.params(),
        &SchemeConfig::new(SchemeKind::Tem, 1.0, 16),
        lattice.increments(),
    )
    .unwrap();
    assert!(close(
        *path.states.last().unwrap(),
        0.872626590465845,
        1e-13
    ));
}
