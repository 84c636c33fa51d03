use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::{rngs::StdRng, Rng, SeedableRng};
use sns_core::hilbert::{coord_to_index, geometry_to_intervals, index_to_coord};
use sns_core::{GridConfig, GridCoord, HilbertIndex, Interval, IntervalSet, QueryGeometry};

/// Builds the curve of the given order by copying the previous order into
/// four quadrants: transposed, shifted up, shifted diagonally, and reflected
/// about the anti-diagonal into the lower right.
fn construct(order: u8) -> Vec<(u32, u32)> {
    let mut path = vec![(0u32, 0u32)];
    for level in 0..order {
        let h = 1u32 << level;
        let mut next = Vec::with_capacity(path.len() * 4);
        next.extend(path.iter().map(|&(x, y)| (y, x)));
        next.extend(path.iter().map(|&(x, y)| (x, y + h)));
        next.extend(path.iter().map(|&(x, y)| (x + h, y + h)));
        next.extend(path.iter().map(|&(x, y)| (2 * h - 1 - y, h - 1 - x)));
        path = next;
    }
    path
}

fn adjacent(a: GridCoord, b: GridCoord) -> bool {
    a.x.abs_diff(b.x) + a.y.abs_diff(b.y) == 1
}

#[test]
fn small_orders_match_construction_exhaustively() {
    for order in 1..=6u8 {
        let cfg = GridConfig::new(order, 1).unwrap();
        let oracle = construct(order);
        assert_eq!(oracle.len() as u64, cfg.cells());
        let mut seen = BTreeSet::new();
        let mut prev = None;
        for (i, &(x, y)) in oracle.iter().enumerate() {
            let c = index_to_coord(&cfg, HilbertIndex(i as u32)).unwrap();
            assert_eq!((c.x, c.y), (x, y), "order {order} index {i}");
            assert_eq!(coord_to_index(&cfg, c).unwrap(), HilbertIndex(i as u32));
            assert!(seen.insert((x, y)));
            if let Some(p) = prev {
                assert!(adjacent(p, c), "order {order} step {i}");
            }
            prev = Some(c);
        }
    }
}

#[test]
fn large_orders_sampled() {
    let mut rng = StdRng::seed_from_u64(7);
    for order in 7..=16u8 {
        let cfg = GridConfig::new(order, 1).unwrap();
        for _ in 0..10_000 {
            let i = rng.gen_range(0..cfg.cells() - 1) as u32;
            let a = index_to_coord(&cfg, HilbertIndex(i)).unwrap();
            let b = index_to_coord(&cfg, HilbertIndex(i + 1)).unwrap();
            assert_eq!(coord_to_index(&cfg, a).unwrap(), HilbertIndex(i));
            assert!(adjacent(a, b), "order {order} index {i}");
            let c = GridCoord::new(rng.gen_range(0..cfg.side()), rng.gen_range(0..cfg.side()));
            let back = coord_to_index(&cfg, c).unwrap();
            assert_eq!(index_to_coord(&cfg, back).unwrap(), c);
        }
    }
}

#[test]
fn quadrants_nest() {
    // an index's top two bits pick the quadrant at every order
    for order in 2..=6u8 {
        let cfg = GridConfig::new(order, 1).unwrap();
        let half = cfg.side() / 2;
        let quarter = (cfg.cells() / 4) as u32;
        let mut quadrant_of = [None; 4];
        for i in 0..cfg.cells() as u32 {
            let c = index_to_coord(&cfg, HilbertIndex(i)).unwrap();
            let q = (c.x / half, c.y / half);
            let slot = &mut quadrant_of[(i / quarter) as usize];
            assert_eq!(*slot.get_or_insert(q), q);
        }
        assert_eq!(
            quadrant_of.map(Option::unwrap),
            [(0, 0), (0, 1), (1, 1), (1, 0)]
        );
    }
}

fn brute_cells(cfg: &GridConfig, g: &QueryGeometry) -> BTreeSet<u32> {
    let cs = i128::from(cfg.cell_size_cm());
    let (ox, oy) = cfg.origin_cm();
    let mut out = BTreeSet::new();
    for x in 0..cfg.side() {
        for y in 0..cfg.side() {
            let x0 = i128::from(ox) + i128::from(x) * cs;
            let y0 = i128::from(oy) + i128::from(y) * cs;
            let hit = match *g {
                QueryGeometry::Circle {
                    center_x_cm,
                    center_y_cm,
                    radius_cm,
                } => {
                    let (cx, cy) = (i128::from(center_x_cm), i128::from(center_y_cm));
                    let dx = (x0 - cx).max(0).max(cx - (x0 + cs));
                    let dy = (y0 - cy).max(0).max(cy - (y0 + cs));
                    dx * dx + dy * dy <= i128::from(radius_cm).pow(2)
                }
                QueryGeometry::Rect {
                    min_x_cm,
                    min_y_cm,
                    max_x_cm,
                    max_y_cm,
                } => {
                    x0 < i128::from(max_x_cm)
                        && i128::from(min_x_cm) < x0 + cs
                        && y0 < i128::from(max_y_cm)
                        && i128::from(min_y_cm) < y0 + cs
                }
                QueryGeometry::Raw(_) => unreachable!(),
            };
            if hit {
                out.insert(coord_to_index(cfg, GridCoord::new(x, y)).unwrap().0);
            }
        }
    }
    out
}

/// Fewest intervals covering exactly `cells`.
fn minimal_count(cells: &BTreeSet<u32>) -> usize {
    let v: Vec<_> = cells.iter().collect();
    v.windows(2).filter(|w| *w[1] != w[0] + 1).count() + usize::from(!v.is_empty())
}

fn geometry_strategy() -> impl Strategy<Value = QueryGeometry> {
    prop_oneof![
        (-200i64..1000, -200i64..1000, 1u64..600).prop_map(|(x, y, r)| QueryGeometry::Circle {
            center_x_cm: x,
            center_y_cm: y,
            radius_cm: r,
        }),
        (-200i64..1000, -200i64..1000, 1i64..700, 1i64..700).prop_map(|(x, y, w, h)| {
            QueryGeometry::Rect {
                min_x_cm: x,
                min_y_cm: y,
                max_x_cm: x + w,
                max_y_cm: y + h,
            }
        }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn geometry_matches_cell_oracle(order in 1u8..=5, g in geometry_strategy()) {
        let cfg = GridConfig::with_origin(order, 25, -40, 10).unwrap();
        let set = geometry_to_intervals(&cfg, &g).unwrap();
        prop_assert!(set.is_normalized());
        let expected = brute_cells(&cfg, &g);
        let got: BTreeSet<u32> = set.indices().collect();
        prop_assert_eq!(&got, &expected);
        prop_assert_eq!(set.len(), minimal_count(&expected));
    }
}

#[test]
fn single_cell_rect_is_one_index() {
    let cfg = GridConfig::new(4, 100).unwrap();
    for x in 0..16u32 {
        for y in 0..16u32 {
            let g = QueryGeometry::Rect {
                min_x_cm: i64::from(x) * 100,
                min_y_cm: i64::from(y) * 100,
                max_x_cm: i64::from(x + 1) * 100,
                max_y_cm: i64::from(y + 1) * 100,
            };
            let idx = coord_to_index(&cfg, GridCoord::new(x, y)).unwrap().0;
            let set = geometry_to_intervals(&cfg, &g).unwrap();
            assert_eq!(set.intervals(), &[Interval::point(idx)]);
        }
    }
}

/// Row-major scan numbering as a locality baseline.
fn scan_intervals(cfg: &GridConfig, cells: &BTreeSet<u32>) -> usize {
    let scan: BTreeSet<u32> = cells
        .iter()
        .map(|&i| {
            let c = index_to_coord(cfg, HilbertIndex(i)).unwrap();
            c.y * cfg.side() + c.x
        })
        .collect();
    minimal_count(&scan)
}

#[test]
fn circles_need_fewer_intervals_than_scan_in_aggregate() {
    // individual circles can lose to the scan order (a two-cell horizontal
    // pair straddling quadrants), so only the total is compared
    let cfg = GridConfig::new(3, 2).unwrap();
    let (mut hilbert, mut scan) = (0usize, 0usize);
    let mut worse = 0;
    for cx in -2i64..=18 {
        for cy in -2i64..=18 {
            for r in 1u64..=16 {
                let g = QueryGeometry::Circle {
                    center_x_cm: cx,
                    center_y_cm: cy,
                    radius_cm: r,
                };
                let set = geometry_to_intervals(&cfg, &g).unwrap();
                let cells: BTreeSet<u32> = set.indices().collect();
                let s = scan_intervals(&cfg, &cells);
                worse += usize::from(set.len() > s);
                hilbert += set.len();
                scan += s;
            }
        }
    }
    assert!(hilbert < scan, "hilbert {hilbert} scan {scan}");
    assert!(worse > 0);
    // one such circle: centre on the boundary between
    // cells (0,0) and (1,0), half a cell of radius
    let g = QueryGeometry::Circle {
        center_x_cm: 2,
        center_y_cm: 0,
        radius_cm: 1,
    };
    let set = geometry_to_intervals(&cfg, &g).unwrap();
    assert_eq!(set.intervals(), &[Interval::point(0), Interval::point(3)]);
}

#[test]
fn near_indices_stay_near_unlike_scan() {
    // indices at most 4 apart are at most 4 cells apart at every order,
    // while the row-major scan jumps a whole row at each row end
    let mut rng = StdRng::seed_from_u64(11);
    for order in 2u8..=12 {
        let cfg = GridConfig::new(order, 1).unwrap();
        let side = cfg.side();
        let scan = |k: u32| (k % side, k / side);
        let mut hilbert_max = 0f64;
        for _ in 0..20_000 {
            let i = rng.gen_range(0..(cfg.cells() - 4) as u32);
            let d = rng.gen_range(1..=4u32);
            let a = index_to_coord(&cfg, HilbertIndex(i)).unwrap();
            let b = index_to_coord(&cfg, HilbertIndex(i + d)).unwrap();
            hilbert_max = hilbert_max.max(euclid((a.x, a.y), (b.x, b.y)));
        }
        let scan_max = (0..4)
            .map(|d| euclid(scan(side - 1 - d), scan(side)))
            .fold(0f64, f64::max);
        assert!(hilbert_max <= 4.0, "order {order}: {hilbert_max}");
        assert!(scan_max >= f64::from(side - 1), "order {order}: {scan_max}");
    }
}

fn euclid(a: (u32, u32), b: (u32, u32)) -> f64 {
    let dx = f64::from(a.0) - f64::from(b.0);
    let dy = f64::from(a.1) - f64::from(b.1);
    dx.hypot(dy)
}

#[test]
fn raw_geometry_is_normalised_and_bounded() {
    let cfg = GridConfig::new(2, 1).unwrap();
    let raw = IntervalSet::from_intervals([Interval::new(3, 5).unwrap(), Interval::point(6)]);
    let set = geometry_to_intervals(&cfg, &QueryGeometry::Raw(raw)).unwrap();
    assert_eq!(set.intervals(), &[Interval::new(3, 6).unwrap()]);
    let out = IntervalSet::from_intervals([Interval::point(16)]);
    assert!(geometry_to_intervals(&cfg, &QueryGeometry::Raw(out)).is_err());
}
