import os
import subprocess
import sys


from evansbound import _backend

SNIPPET = (
    "from evansbound import _backend, evans, cli;"
    "print(_backend.name, repr(evans.evans(cli.load_problem('mathieu'), 3.0).E))"
)


def _run(env_value):
    env = dict(os.environ)
    env.pop("EVANSBOUND_BACKEND", None)
    if env_value is not None:
        env["EVANSBOUND_BACKEND"] = env_value
    res = subprocess.run([sys.executable, "-c", SNIPPET], capture_output=True, text=True, env=env)
    assert res.returncode == 0, res.stderr
    name, value = res.stdout.split()
    return name, float(value)


def test_forced_python_backend_agrees():
    name, py = _run("python")
    assert name == "python"
    default_name, default = _run(None)
    assert default_name == ("native" if _backend.native is not None else "python")
    assert abs(py - default) < 1e-12


def test_backends_expose_same_api():
    for attr in ("evaluate", "integrate"):
        assert callable(getattr(_backend.python, attr))
        if _backend.native is not None:
            assert callable(getattr(_backend.native, attr))
