import numpy as np
import pytest

from mudec import tensor as tn
from mudec.dsp import MultiChannelSignal


@pytest.fixture
def f64():
    with tn.precision("f64"):
        yield


def sig(data, rate=2048.0, **kw):
    data = np.atleast_2d(np.asarray(data, dtype=np.float64))
    return MultiChannelSignal(data, rate, **kw)


def sine(freq, rate=2048.0, seconds=4.0, amp=1.0):
    t = np.arange(int(rate * seconds)) / rate
    return sig(amp * np.sin(2 * np.pi * freq * t), rate)


def steady_gain_db(out, inp, skip):
    """Output/input RMS ratio in dB after discarding ``skip`` samples of transient."""
    a = np.sqrt(np.mean(out[..., skip:] ** 2))
    b = np.sqrt(np.mean(inp[..., skip:] ** 2))
    return 20 * np.log10(a / b)


_ACCEPTANCE: list[str] = []


@pytest.fixture
def verdict(request):
    """``verdict(tag, ok, detail)`` prints one pass/fail line now and again in the run summary."""
    reporter = request.config.pluginmanager.get_plugin("terminalreporter")

    def emit(tag, ok, detail):
        line = f"{tag} {'PASS' if ok else 'FAIL'}  {detail}"
        _ACCEPTANCE.append(line)
        if reporter is not None:
            reporter.write_line("")
            reporter.write_line(line)
        return ok

    return emit


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)
