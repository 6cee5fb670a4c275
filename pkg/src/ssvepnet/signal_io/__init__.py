"""Epoch containers, on-disk formats and band-pass preprocessing."""

from .epochs import (
    DatasetManifest,
    EpochSet,
    concat_epochs,
    extract_window,
    read_epoch_file,
    read_manifest,
    select_channels,
    write_epoch_file,
    write_manifest,
)
from .filters import FilterSpec, bandpass, butter_design, filtfilt, sos_response, sosfilt, sosfilt_zi
