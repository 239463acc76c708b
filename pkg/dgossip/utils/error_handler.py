class DGossipException(Exception):
    """Custom exception class for dgossip errors.

    ``internal_code`` ranges: 1xxx topology, 2xxx data, 3xxx model, 4xxx localopt,
    5xxx engine, 6xxx configuration/CLI, 7xxx storage.
    """

    exit_code: int = 1

    def __init__(self, internal_code: int, message: str, detail: str = ""):
        self.internal_code = internal_code
        self.message = message
        self.detail = detail
        super().__init__(f"[{internal_code}] {message} - {detail}")


class ConfigError(DGossipException):
    """Invalid configuration, topology, partition or dataset input."""

    exit_code = 2


class DivergenceError(DGossipException):
    """Non-finite values appeared during training."""

    exit_code = 3

    def __init__(
        self,
        internal_code: int,
        message: str,
        detail: str = "",
        round: int | None = None,
        client: int | None = None,
    ):
        self.round = round
        self.client = client
        super().__init__(
            internal_code, message, detail or f"round={round} client={client}"
        )

    def at_round(self, round: int) -> "DivergenceError":
        """Return a copy of this error annotated with the round it occurred in."""
        return DivergenceError(
            self.internal_code, self.message, round=round, client=self.client
        )


class StorageError(DGossipException):
    """Reading or writing an artifact failed."""

    exit_code = 4
