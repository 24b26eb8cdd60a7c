"""Prometheus metrics for fitting runs, rendered as a textfile per CLI run"""
from prometheus_client import CollectorRegistry, Counter, Gauge, Histogram, generate_latest

REGISTRY = CollectorRegistry()

EM_ITERATIONS = Counter(
    "cyhmm_em_iterations", "EM iterations run", registry=REGISTRY)
ESTEP_SECONDS = Histogram(
    "cyhmm_estep_seconds", "Wall time of one E-step over the population",
    buckets=(0.01, 0.05, 0.1, 0.5, 1.0, 5.0, 10.0, 30.0, 60.0, 300.0), registry=REGISTRY)
FIT_LOGLIK = Gauge(
    "cyhmm_fit_loglik", "Total log likelihood after the latest E-step", registry=REGISTRY)
SERIES_PROCESSED = Counter(
    "cyhmm_series_processed", "Series passed through forward-backward", registry=REGISTRY)


def render() -> str:
    """Text exposition format of every metric, for the node-exporter textfile collector"""
    return generate_latest(REGISTRY).decode("utf-8")
