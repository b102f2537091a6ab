LIMIT = 1

def validate(request):
    """Check a payment request."""
    return charge(request)

def charge(request):
    return request
