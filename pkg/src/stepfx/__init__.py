"""Step-by-step audio effect matching toolkit.

Subpackages/modules:

- ``synth``     surrogate synthesizer presets and deterministic rendering
- ``effects``   the five-effect rack with parameter schemas and DSP bodies
- ``features``  Mel/MFCC/power-spectrum features and the four similarity metrics
- ``dataset``   labeled clip generation, CNN pair building, RNN sequence building
- ``nn``        minimal deterministic tensor layers with reverse-mode gradients
- ``models``    per-effect CNN predictors and the next-effect RNN
- ``training``  training loops, early stopping, history
- ``engine``    the iterative suggest/apply/undo matching loop
- ``evaluate``  evaluation tables, report CSVs, spectrogram progressions
- ``service``   local HTTP/JSON session service
- ``cli``       the ``stepfx`` command line
"""

def _tune_allocator() -> None:
    # glibc returns large blocks to the OS by default; training then pays
    # page-fault cost on every NumPy temporary. Raising M_MMAP_THRESHOLD
    # keeps those blocks reusable on the heap (3-10x on the conv layers).
    import ctypes
    import sys

    if sys.platform.startswith("linux"):
        try:
            ctypes.CDLL("libc.so.6", use_errno=True).mallopt(-3, 1 << 30)
        except (OSError, AttributeError):
            pass


_tune_allocator()

from stepfx.audio import AudioBuffer, read_wav, write_wav

__version__ = "0.1.0"

__all__ = ["AudioBuffer", "read_wav", "write_wav", "__version__"]
