"""Plotting scripts for aeroduel CSV logs.

These tools read the documented evaluation-results and episode-trace CSV
schemas and render summary figures. They never import the simulator
package and never modify their inputs.
"""

__version__ = "0.1.0"
