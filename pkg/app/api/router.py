"""
JDCEV Bond Engine - API Router
"""

from fastapi import APIRouter

from app.api import pricing

api_router = APIRouter()

api_router.include_router(pricing.router, prefix="/pricing", tags=["Pricing"])
