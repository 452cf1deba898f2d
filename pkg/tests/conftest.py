from hypothesis import HealthCheck, settings

settings.register_profile(
    "cvkit",
    deadline=None,
    max_examples=25,
    derandomize=True,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("cvkit")
