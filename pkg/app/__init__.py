"""Архетипный анализ для непрерывных и бинарных данных"""
