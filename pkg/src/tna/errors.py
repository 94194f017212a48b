"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument is outside the domain an operation is defined on."""


class SaturationError(RuntimeError):
    """The rotation loop hit its factor cap before reaching the target mRC."""

    def __init__(self, target_mrc_deg, plateau_mrc_deg, n_r, member=None):
        self.target_mrc_deg = target_mrc_deg
        self.plateau_mrc_deg = plateau_mrc_deg
        self.n_r = n_r
        self.member = member
        where = "" if member is None else f" (ensemble member {member})"
        super().__init__(
            f"mRC plateaued at {plateau_mrc_deg:.3f} deg after {n_r} factors, "
            f"below target {target_mrc_deg:.3f} deg{where}"
        )


class UnfittedMapError(RuntimeError):
    """A calibration map was applied before being fitted."""


class BundleError(ValueError):
    """Base class for feature-bundle load failures."""


class ChecksumError(BundleError):
    """Stored CRC-32 does not match the payload."""


class FormatVersionError(BundleError):
    """Manifest format version is not supported."""


class TruncatedFileError(BundleError):
    """A payload file is shorter than the manifest says."""
