use pwbary::pbarycenter::*;
fn main() {
    let c = PointConfiguration::new(
        2,
        vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]],
        vec![0.3, 0.4, 0.3],
        3.0,
    ).unwrap();
    match solve_point_barycenter(&c, 1e-11) {
        Ok(r) => println!("ok z={:?} res={} iters={}", r.z, r.residual, r.iterations),
        Err(e) => println!("err {e}"),
    }
    let c2 = PointConfiguration::new(
        2,
        vec![vec![0.0, 0.0], vec![1.0, 1.0]],
        vec![0.85, 0.15],
        1.2,
    ).unwrap();
    match solve_point_barycenter(&c2, 1e-10) {
        Ok(r) => println!("ok z={:?} res={} iters={}", r.z, r.residual, r.iterations),
        Err(e) => println!("err {e}"),
    }
}
