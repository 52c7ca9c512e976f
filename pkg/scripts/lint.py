import subprocess


def start():
    cmd = ';'.join(
        [
            "echo Flake8:",
            'flake8 drivesense tests',
            "echo Mypy:",
            'mypy drivesense'
        ])
    subprocess.run(cmd, shell=True)
