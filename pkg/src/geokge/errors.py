"""Exception hierarchy shared across the package."""


class GeoKGEError(Exception):
    """Base class for all package errors."""


# --- knowledge graph construction / ingestion ---

class KGValidationError(GeoKGEError):
    pass


class UnknownEntityInTriple(KGValidationError):
    pass


class DuplicateEntityId(KGValidationError):
    pass


class FootprintOutsideStudyArea(KGValidationError):
    pass


class EmptyKG(KGValidationError):
    pass


class UnknownEntity(GeoKGEError):
    pass


class UnknownRelation(GeoKGEError):
    pass


class InfeasibleSplit(GeoKGEError):
    pass


# --- encoders / operators ---

class BadScaleRange(GeoKGEError):
    pass


class NonFiniteInput(GeoKGEError):
    pass


class NotGeographic(GeoKGEError):
    pass


class DimensionMismatch(GeoKGEError):
    pass


class UnsupportedMode(GeoKGEError):
    pass


class EmptyInput(GeoKGEError):
    pass


class ZeroVector(GeoKGEError):
    pass


# --- queries ---

class QueryError(GeoKGEError):
    pass


class CyclicQuery(QueryError):
    pass


class MultipleSinks(QueryError):
    pass


class UnknownAnchor(QueryError):
    pass


# --- sampling ---

class SamplingExhausted(GeoKGEError):
    pass


class EmptyNegativePool(GeoKGEError):
    pass


# --- training / evaluation ---

class NonFiniteLoss(GeoKGEError):
    pass


class EmptyNegatives(GeoKGEError):
    pass


class NoLocationEncoder(GeoKGEError):
    pass


# --- persistence ---

class CheckpointError(GeoKGEError):
    pass


class VersionMismatch(CheckpointError):
    pass


class CorruptBlob(CheckpointError):
    pass


class IoFailure(CheckpointError):
    pass
