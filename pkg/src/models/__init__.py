"""
Simulation Models Package
"""
