use criterion::{black_box, criterion_group, criterion_main, BatchSize, Criterion};
use quadet::geometry::{iou, oriented_centerness};
use quadet::postprocess::{rotated_nms, Detection};
use quadet::rng::CounterRng;
use quadet::{Point, Quad};

fn random_quad(rng: &mut CounterRng) -> Quad {
    loop {
        let cx = rng.uniform(0.0, 256.0);
        let cy = rng.uniform(0.0, 256.0);
        let r = rng.uniform(5.0, 30.0);
        let mut angles: Vec<f64> = (0..4)
            .map(|_| rng.uniform(0.0, std::f64::consts::TAU))
            .collect();
        angles.sort_by(|a, b| a.partial_cmp(b).unwrap());
        if angles.windows(2).any(|w| w[1] - w[0] < 0.3) {
            continue;
        }
        let mut coords = [0.0; 8];
        for (i, a) in angles.iter().enumerate() {
            coords[2 * i] = cx + r * a.cos();
            coords[2 * i + 1] = cy + r * (1.0 + rng.uniform(0.0, 0.5)) * a.sin();
        }
        if let Ok(q) = Quad::from_coords(coords) {
            return q;
        }
    }
}

fn bench_iou(c: &mut Criterion) {
    let mut rng = CounterRng::new(1);
    let pairs: Vec<(Quad, Quad)> = (0..256)
        .map(|_| {
            let a = random_quad(&mut rng);
            let ca = a.centroid();
            let b = random_quad(&mut rng);
            let cb = b.centroid();
            let b = b.translate(ca.x - cb.x + rng.uniform(-20.0, 20.0), ca.y - cb.y + rng.uniform(-20.0, 20.0));
            (a, b)
        })
        .collect();
    let mut i = 0;
    c.bench_function("iou_quad_pair", |bch| {
        bch.iter(|| {
            let (a, b) = &pairs[i % pairs.len()];
            i += 1;
            black_box(iou(a, b))
        })
    });
}

fn bench_centerness(c: &mut Criterion) {
    let mut rng = CounterRng::new(2);
    let cases: Vec<(Quad, Point)> = (0..256)
        .map(|_| {
            let q = random_quad(&mut rng);
            (q.clone(), q.centroid())
        })
        .collect();
    let mut i = 0;
    c.bench_function("oriented_centerness", |bch| {
        bch.iter(|| {
            let (q, p) = &cases[i % cases.len()];
            i += 1;
            black_box(oriented_centerness(q, *p, 2.0))
        })
    });
}

fn bench_nms(c: &mut Criterion) {
    let mut rng = CounterRng::new(3);
    let dets: Vec<Detection> = (0..500)
        .map(|_| {
            let quad = random_quad(&mut rng);
            let conf = rng.uniform(0.05, 1.0);
            Detection {
                image_id: "bench".into(),
                class_id: rng.below(4) as i32,
                class_name: "c".into(),
                confidence: conf,
                centerness: 1.0,
                score: conf,
                quad,
            }
        })
        .collect();
    c.bench_function("rotated_nms_500", |bch| {
        bch.iter_batched(
            || dets.clone(),
            |d| black_box(rotated_nms(&d, 0.1)),
            BatchSize::LargeInput,
        )
    });
}

criterion_group!(benches, bench_iou, bench_centerness, bench_nms);
criterion_main!(benches);
