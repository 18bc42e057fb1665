"""coldflow: staged ML pipelines for refrigeration fleet telemetry.

The pieces fit together like this: a file-backed document store with a
MongoDB-subset aggregation dialect holds telemetry, training examples and
model blobs; a worker-pool orchestrator runs pipeline stages with strict
barriers; a from-scratch recurrent network engine (RNN/LSTM, BPTT, Adam)
learns time-to-threshold regression and fault classification; a thermal
fleet simulator provides physics-grounded data and oracles; and a greedy
selector turns predictions into demand-side-response candidate sets.
"""

__version__ = "0.1.0"
