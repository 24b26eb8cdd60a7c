"""Config, artifact, metrics and thread-pool helpers"""
