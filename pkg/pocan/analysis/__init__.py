# Analysis strategies, one per CLI command.
