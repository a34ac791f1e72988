"""
Data Ingestion Package
"""
