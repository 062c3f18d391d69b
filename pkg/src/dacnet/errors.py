"""Exception hierarchy shared across the toolkit."""


class DacnetError(Exception):
    """Base class for all toolkit errors."""


class DatasetError(DacnetError):
    pass


class UnknownDiseaseError(DatasetError):
    pass


class ManifestError(DatasetError):
    pass


class TransformError(DacnetError):
    pass


class ImageDecodeError(TransformError):
    def __init__(self, message, image_id=None):
        super().__init__(message)
        self.image_id = image_id


class ModelError(DacnetError):
    pass


class UnknownBackboneError(ModelError):
    pass


class WeightsUnavailableError(ModelError):
    pass


class CamUnsupportedError(ModelError):
    pass


class FingerprintMismatchError(ModelError):
    pass


class LeakageError(DacnetError):
    """Raised when validation/test information would leak into a decision."""


class TrainingDivergedError(DacnetError):
    pass
