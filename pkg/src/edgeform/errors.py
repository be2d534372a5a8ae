class SolverError(RuntimeError):
    pass


class AvoidanceRegionError(SolverError):
    """A weighted pair sits at or inside the safety radius."""

    def __init__(self, message, *, pair=None, edge=None, step=None, distance=None):
        super().__init__(message)
        self.pair = pair
        self.edge = edge
        self.step = step
        self.distance = distance


class ConvergenceError(SolverError):
    def __init__(self, message, *, delta=None, iterations=None):
        super().__init__(message)
        self.delta = delta
        self.iterations = iterations


class SingularLambdaError(SolverError):
    def __init__(self, message, *, step=None, condition=None):
        super().__init__(message)
        self.step = step
        self.condition = condition


class IndefiniteInnovationError(SolverError):
    pass


class CollisionError(RuntimeError):
    """Closed-loop simulation put a neighbor pair within the safety radius."""

    def __init__(self, message, *, step=None, pair=None, distance=None, record=None):
        super().__init__(message)
        self.step = step
        self.pair = pair
        self.distance = distance
        self.record = record
