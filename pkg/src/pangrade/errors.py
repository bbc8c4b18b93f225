"""Exception and warning types raised across the toolkit."""


class PangradeError(Exception):
    """Base class for all toolkit errors. CLI maps these to exit code 2."""


class ValidationError(PangradeError):
    """A domain type was constructed with inconsistent contents."""


class LengthMismatchError(PangradeError):
    """RLE run sum disagrees with the mask pixel count."""


class DimensionMismatchError(PangradeError):
    """Two rasters/masks that must share dimensions do not."""


class UnknownCategoryError(PangradeError):
    """A segment references a category id absent from the taxonomy."""


class NotAThingCategoryError(PangradeError):
    """An instance-level operation was asked for a stuff category."""


class MalformedExportError(PangradeError):
    """Annotation export file misses required fields or structure."""


class UnknownCategoryNameError(PangradeError):
    """Exported label name has no taxonomy counterpart."""


class PercentOutOfRangeError(PangradeError):
    """Percent coordinate outside [0, 100]."""


class IdNotInTableError(PangradeError):
    """Raster contains a segment id missing from the sidecar table."""


class AreaMismatchError(PangradeError):
    """Stored segment area disagrees with the counted raster area."""


class BadPngError(PangradeError):
    """Panoptic PNG is unreadable or not 8-bit RGB."""


class IdOverflowError(PangradeError):
    """Segment id does not fit the 24-bit RGB encoding."""


class EmptyDatasetError(PangradeError):
    """Dataset-level evaluation received no image pairs."""


class EmptyInputError(PangradeError):
    """Agreement analysis received no input pairs."""


class NoForegroundFruitError(PangradeError):
    """Relative-size denominator is zero (no fruit and no defects)."""


class NoMatchesError(PangradeError):
    """Size agreement found no matched instance pairs."""


class ZeroVarianceError(PangradeError):
    """Correlation undefined: one size axis has zero variance."""


class TooFewImagesError(PangradeError):
    """Manifest holds fewer images than requested folds."""


class KeyMismatchError(PangradeError):
    """Fold reports do not share an identical metric key set."""


class PangradeWarning(UserWarning):
    """Base class for data-quality warnings emitted by the toolkit."""


class SegmentOverwriteWarning(PangradeWarning):
    """Rasterization overwrote pixels of an earlier segment."""


class SegmentDroppedWarning(PangradeWarning):
    """A segment vanished (zero pixels) during a geometric transform."""


class UnpairedInputWarning(PangradeWarning):
    """An input item had no counterpart and was skipped."""
