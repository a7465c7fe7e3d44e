"""
Entry point for running the fracfujita CLI from source.
"""

from fracfujita.main import launch

if __name__ == "__main__":
    launch()
