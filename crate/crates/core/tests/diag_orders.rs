use wbomd::diag::{psi_recursion, residual_r0};
use wbomd::numerics::LogLogFit;
use wbomd::{MatrixPotential, SpatialGrid};

#[test]
fn recursion_orders_over_the_mass_ladder() {
    let pot = MatrixPotential::three_level_crossing(0.5).unwrap();
    let grid = SpatialGrid::symmetric(3.0, 600).unwrap();
    let masses = [1e3, 2e3, 4e3, 8e3];
    let (mut psi1, mut psi2, mut lam, mut r0) = (vec![], vec![], vec![], vec![]);
    for m in masses {
        let it = psi_recursion(&pot, m, 3, &grid).unwrap();
        let steps = it.psi_steps();
        psi1.push(steps[0]);
        psi2.push(steps[1]);
        lam.push(it.lambda_steps()[0]);
        let two = psi_recursion(&pot, m, 2, &grid).unwrap();
        r0.push(residual_r0(&two, &grid).unwrap().r0_sup);
    }
    let fit = |ys: &[f64]| LogLogFit::fit(&masses, ys).unwrap();
    let (f1, f2, fl, fr) = (fit(&psi1), fit(&psi2), fit(&lam), fit(&r0));
    println!("psi2-psi1 {f1:?}\npsi3-psi2 {f2:?}\nlambda {fl:?}\nr0 {fr:?}");
    assert!((f1.slope + 1.0).abs() < 0.1 && f1.r_squared >= 0.98);
    assert!((f2.slope + 2.0).abs() < 0.15 && f2.r_squared >= 0.98);
    assert!((fl.slope + 1.0).abs() < 0.1 && fl.r_squared >= 0.98);
    assert!((fr.slope + 2.0).abs() < 0.2 && fr.r_squared >= 0.98);
}
