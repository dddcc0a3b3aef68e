use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use memdelay::dynamics::{Backend, Execution, Integrator};
use memdelay::model::{build_operator, parabola_coefficients, OperatorKind, Scenario, Schedule};

const STEPS: usize = 64;

fn scenario(modes: usize) -> Scenario {
    let length = std::f64::consts::PI;
    let mut s = Scenario::desk_default().with_schedule(Schedule::periodic_delayed(0.5, 2.0, 0.25, 0.5));
    s.operator = build_operator(OperatorKind::Wave1d, modes, length).unwrap();
    s.initial_position = parabola_coefficients(modes, length);
    s.initial_velocity = vec![0.0; modes];
    s
}

fn steps(c: &mut Criterion) {
    let mut group = c.benchmark_group("step");
    group.sample_size(20);
    for modes in [16, 64, 256] {
        let validated = scenario(modes).validate().unwrap();
        group.throughput(Throughput::Elements((modes * STEPS) as u64));
        for (name, execution) in [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)] {
            let integ = Integrator::new(&validated, Backend::Dafermos)
                .unwrap()
                .with_execution(execution);
            let start = integ.init_state();
            group.bench_with_input(BenchmarkId::new(name, modes), &modes, |b, _| {
                b.iter_batched(
                    || start.clone(),
                    |mut state| {
                        for _ in 0..STEPS {
                            integ.step(&mut state).unwrap();
                        }
                        state
                    },
                    criterion::BatchSize::LargeInput,
                )
            });
        }
    }
    group.finish();
}

criterion_group!(benches, steps);
criterion_main!(benches);
