use std::time::Instant;

use twoscale_core::cell::{homogenized_tensor, solve_cell_problems};
use twoscale_core::coefficient::TwoScaleCoefficient;
use twoscale_core::field::{Factor, Field, SeparableProduct};
use twoscale_core::linalg::CgOptions;
use twoscale_core::mesh::Grid;
use twoscale_core::quadrature::Rule;

fn sine_cell() -> TwoScaleCoefficient {
    TwoScaleCoefficient::uniform(
        Field::constant(1, 9.0),
        vec![SeparableProduct::new(1.0, vec![Factor::One], vec![Factor::Sin(1)]).unwrap()],
        None,
    )
    .unwrap()
}

#[test]
fn harmonic_mean_in_one_dimension() {
    let t = Instant::now();
    let c = sine_cell();
    let cells = solve_cell_problems(&c, &[1.0], Grid::boxed(1, 1), 10, CgOptions::default()).unwrap();
    let a0 = homogenized_tensor(&c, &[1.0], &cells).unwrap();
    let exact = 80f64.sqrt();
    for node in 0..3 {
        let v = a0.at_node(node)[0];
        assert!((v - exact).abs() < 1e-6, "{v} vs {exact}");
    }
    println!("A0 = {:.12} in {:?}", a0.at_node(0)[0], t.elapsed());
}

#[test]
fn laminate_gives_harmonic_and_arithmetic_means() {
    let (alpha, beta, width) = (1.0, 10.0, 0.02);
    let lam = Factor::Laminate { width };
    let mean = Field::new(
        2,
        vec![
            SeparableProduct::constant(2, alpha),
            SeparableProduct::new(beta - alpha, vec![Factor::One, Factor::One], vec![lam, Factor::One]).unwrap(),
        ],
    )
    .unwrap();
    let c = TwoScaleCoefficient::uniform(mean, vec![], None).unwrap();
    let t = Instant::now();
    let cells = solve_cell_problems(&c, &[], Grid::boxed(2, 0), 7, CgOptions::default()).unwrap();
    let a0 = homogenized_tensor(&c, &[], &cells).unwrap();
    let elapsed = t.elapsed();
    let profile = |s: f64| alpha + (beta - alpha) * lam.eval(s);
    let rule = Rule::gauss(5).composite(0.0, 1.0, 4000);
    let harmonic = 1.0 / rule.integrate(|s| 1.0 / profile(s));
    let arithmetic = rule.integrate(profile);
    let t0 = a0.at_node(0);
    println!("{t0:?} vs ({harmonic}, {arithmetic}) in {elapsed:?}");
    assert!((t0[0] / harmonic - 1.0).abs() < 0.01);
    assert!((t0[3] / arithmetic - 1.0).abs() < 0.01);
    assert!(t0[1].abs() < 1e-8 && t0[1] == t0[2]);
}
