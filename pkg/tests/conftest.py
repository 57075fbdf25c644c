from hypothesis import settings

# keep property-test example generation reproducible run to run
settings.register_profile("deterministic", derandomize=True, deadline=None)
settings.load_profile("deterministic")
