use proptest::prelude::*;
use rcmlab::lattice::{Boundary, LatticeBox};

fn boundary() -> impl Strategy<Value = Boundary> {
    prop::sample::select(vec![Boundary::Periodic, Boundary::Absorbing])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ball_is_exactly_the_radius_set(d in 2usize..4, half in 1usize..5, b in boundary(), r in 0u64..6, c in any::<prop::sample::Index>()) {
        let lat = LatticeBox::new(d, 2 * half + 1, b).unwrap();
        let center = c.index(lat.n_vertices());
        let ball = lat.ball(center, r).unwrap();
        let brute: Vec<usize> = (0..lat.n_vertices()).filter(|&v| lat.distance(center, v).unwrap() <= r).collect();
        prop_assert_eq!(&ball.members, &brute);
        prop_assert!(ball.members.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn coordinates_round_trip(d in 2usize..4, half in 1usize..5, b in boundary(), v in any::<prop::sample::Index>()) {
        let lat = LatticeBox::new(d, 2 * half + 1, b).unwrap();
        let v = v.index(lat.n_vertices());
        prop_assert_eq!(lat.vertex(&lat.coords(v)).unwrap(), v);
        for axis in 0..d {
            if let Some(u) = lat.step(v, axis, 1) {
                prop_assert_eq!(lat.step(u, axis, -1), Some(v));
                prop_assert_eq!(lat.distance(u, v).unwrap(), 1);
            }
        }
    }

    #[test]
    fn distance_is_a_metric(half in 1usize..4, b in boundary(), x in any::<prop::sample::Index>(), y in any::<prop::sample::Index>(), z in any::<prop::sample::Index>()) {
        let lat = LatticeBox::new(2, 2 * half + 1, b).unwrap();
        let n = lat.n_vertices();
        let (x, y, z) = (x.index(n), y.index(n), z.index(n));
        let dist = |a, b| lat.distance(a, b).unwrap();
        prop_assert_eq!(dist(x, y), dist(y, x));
        prop_assert!(dist(x, z) <= dist(x, y) + dist(y, z));
        prop_assert_eq!(dist(x, x), 0);
    }
}

#[test]
fn edge_counts() {
    let torus = LatticeBox::new(3, 5, Boundary::Periodic).unwrap();
    assert_eq!(torus.n_edges(), 3 * 125);
    let boxed = LatticeBox::new(2, 5, Boundary::Absorbing).unwrap();
    // Interior edges plus one boundary edge per face vertex and direction.
    assert_eq!(boxed.n_edges(), 2 * 25 + 2 * 5);
    assert!(LatticeBox::new(2, 4, Boundary::Periodic).is_err());
    assert!(LatticeBox::new(1, 5, Boundary::Periodic).is_err());
}
