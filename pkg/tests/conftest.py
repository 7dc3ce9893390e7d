from hypothesis import HealthCheck, settings

# Zero-flake suite: property tests replay the same cases every run.
settings.register_profile(
    "ci",
    derandomize=True,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("ci")
