"""Random toy scheduling problems shared by the scheduler and acceptance tests."""
import random
from fractions import Fraction

from conftest import toy_spec
from oracles import brute_force_schedule
from vitsplit.profiling import LatencyModel
from vitsplit.scheduler import SchedulerConfig, schedule


def random_case(rng: random.Random):
    n = rng.randint(1, 6)
    x0 = rng.randint(2, 64)
    spec = toy_spec(n, x0, embed_dim=rng.choice([1, 4, 16, 64]),
                    device_overhead_ms=rng.choice([0.0, rng.uniform(0, 5)]),
                    cloud_overhead_ms=rng.choice([0.0, rng.uniform(0, 5)]),
                    result_payload_bytes=rng.choice([0, 0, rng.randint(1, 500)]))
    dev = (rng.uniform(0.01, 5), rng.uniform(0.0, 10))
    cloud = (rng.uniform(0.001, 1), rng.uniform(0.0, 2))
    bw = 10 ** rng.uniform(2, 8)
    cfg = SchedulerConfig(sla_ms=rng.uniform(1, 400), grid_step=0.25, split_k=rng.randint(1, 6),
                          compression_ratio=rng.choice([1.0, rng.uniform(0.1, 1)]),
                          raw_input_payload_bytes=rng.choice([None, rng.randint(0, 4000)]),
                          rtt_ms=rng.choice([0.0, rng.uniform(0, 20)]))
    return spec, dev, cloud, bw, cfg


def oracle_for(spec, dev, cloud, bw, cfg):
    return brute_force_schedule(
        spec.num_layers, spec.initial_tokens, spec.token_bytes, dev, cloud, bw, cfg.sla_ms,
        Fraction(cfg.grid_step), cfg.split_k, spec.device_overhead_ms, spec.cloud_overhead_ms,
        spec.result_payload_bytes, cfg.rtt_ms, cfg.compression_ratio, cfg.raw_input_payload_bytes)


def matches_oracle(seed) -> bool:
    spec, dev, cloud, bw, cfg = random_case(random.Random(seed))
    d = schedule(spec, LatencyModel(*dev), LatencyModel(*cloud), bw, cfg)
    m, s, total, feasible = oracle_for(spec, dev, cloud, bw, cfg)
    if (d.alpha, d.split_point, d.feasible) != (m * cfg.grid_step, s, feasible):
        return False
    return abs(d.predicted_total_ms - total) <= 1e-9 * max(1.0, abs(total))
