"""DER dispatch tracker: feeder model, barrier dynamics, estimator, engine and CLI."""
