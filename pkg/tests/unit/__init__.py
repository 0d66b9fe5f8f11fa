"""Unit Tests Package"""
