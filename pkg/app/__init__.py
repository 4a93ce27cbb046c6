# JDCEV Bond Engine - defaultable coupon bond pricing
